// Renders the codebook as a survey form and reads answers back out of the DOM.
// Widget kind is fixed by variable kind: radio = single_choice, checkbox
// group = multi_choice, number spinner = count, text input = free_text.

import type { AnswersMap, Codebook, VariableDef, Violation } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function optionWidget(variable: VariableDef, kind: "radio" | "checkbox"): HTMLElement {
  const group = el("div", { class: "option-group", "data-key": variable.key });
  for (const option of variable.options ?? []) {
    const row = el("label", { class: "option-row" });
    const input = el("input", {
      type: kind,
      name: variable.key,
      value: option.code,
    });
    row.appendChild(input);
    row.appendChild(el("span", {}, option.label));
    if (option.definition) {
      // written definition shown on expand, as the codebook intends
      const details = el("details", { class: "definition" });
      details.appendChild(el("summary", {}, "?"));
      details.appendChild(el("p", {}, option.definition));
      if (option.reference_image_url) {
        details.appendChild(el("img", {
          src: option.reference_image_url,
          alt: `reference for ${option.label}`,
          loading: "lazy",
        }));
      }
      row.appendChild(details);
    }
    group.appendChild(row);
  }
  return group;
}

export function renderForm(container: HTMLElement, cb: Codebook): void {
  container.innerHTML = "";
  for (const variable of cb.variables) {
    const section = el("fieldset", { class: "variable", "data-key": variable.key });
    const legend = el("legend", {}, variable.label);
    if (variable.required) legend.appendChild(el("span", { class: "required" }, " *"));
    section.appendChild(legend);
    switch (variable.kind) {
      case "single_choice":
        section.appendChild(optionWidget(variable, "radio"));
        break;
      case "multi_choice":
        section.appendChild(optionWidget(variable, "checkbox"));
        break;
      case "count":
        section.appendChild(el("input", {
          type: "number",
          name: variable.key,
          min: String(variable.min_count ?? 0),
          max: String(variable.max_count ?? 99),
          value: String(variable.min_count ?? 0),
        }));
        break;
      case "free_text":
        section.appendChild(el("input", { type: "text", name: variable.key }));
        break;
    }
    section.appendChild(el("div", { class: "violation", "data-for": variable.key }));
    container.appendChild(section);
  }
}

/** Collect the current form state; unanswered variables are simply absent. */
export function readAnswers(container: HTMLElement, cb: Codebook): AnswersMap {
  const answers: AnswersMap = {};
  for (const variable of cb.variables) {
    const inputs = container.querySelectorAll<HTMLInputElement>(
      `[name="${variable.key}"]`,
    );
    if (variable.kind === "single_choice") {
      for (const input of inputs) {
        if (input.checked) answers[variable.key] = { choice: input.value };
      }
    } else if (variable.kind === "multi_choice") {
      const selected = [...inputs].filter((i) => i.checked).map((i) => i.value);
      if (selected.length > 0) answers[variable.key] = { choices: selected };
    } else if (variable.kind === "count") {
      const raw = inputs[0]?.value ?? "";
      if (raw !== "") answers[variable.key] = { count: Number(raw) };
    } else {
      const text = inputs[0]?.value ?? "";
      if (text !== "") answers[variable.key] = { text };
    }
  }
  return answers;
}

export function showViolations(container: HTMLElement, violations: Violation[]): void {
  for (const slot of container.querySelectorAll<HTMLElement>(".violation")) {
    slot.textContent = "";
  }
  for (const violation of violations) {
    const slot = container.querySelector<HTMLElement>(
      `.violation[data-for="${violation.variable_key}"]`,
    );
    if (slot) slot.textContent = violation.reason;
  }
}

export function clearForm(container: HTMLElement, cb: Codebook): void {
  renderForm(container, cb);
}
