import { ApiClient } from "./api.js";
import { LabelSession } from "./session.js";

function requireElement<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const raterId = params.get("rater");
  const status = requireElement<HTMLElement>("status");
  if (!raterId) {
    status.textContent = "Add ?rater=<your-id> to the URL to start labeling.";
    return;
  }

  const session = new LabelSession(new ApiClient(), raterId, {
    form: requireElement("form"),
    image: requireElement<HTMLImageElement>("footprint-image"),
    gsvLink: requireElement<HTMLAnchorElement>("gsv-link"),
    taskLabel: requireElement("task-label"),
    status,
  });

  requireElement<HTMLButtonElement>("submit").addEventListener("click", () => {
    void session.submit();
  });
  requireElement<HTMLButtonElement>("no-coverage").addEventListener("click", () => {
    void session.flagNoCoverage();
  });

  // number keys pick radio options in the focused group, Enter submits
  document.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !(event.target instanceof HTMLInputElement &&
        event.target.type === "text")) {
      void session.submit();
      return;
    }
    const n = Number(event.key);
    if (!Number.isInteger(n) || n < 1) return;
    const active = document.activeElement?.closest("fieldset.variable");
    if (!active) return;
    const radios = active.querySelectorAll<HTMLInputElement>('input[type="radio"]');
    const radio = radios[n - 1];
    if (radio) radio.checked = true;
  });

  try {
    await session.start();
  } catch (err) {
    // schema fetch failure is a blocking error screen
    document.body.innerHTML = "";
    const panel = document.createElement("div");
    panel.className = "fatal";
    panel.textContent = `Cannot reach the labeling service: ${err}`;
    document.body.appendChild(panel);
  }
}

void boot();
