// The label loop: fetch next task, show imagery links, validate, submit, advance.
// All acceptance lives server-side; a page refresh only loses unsubmitted input.

import { ApiClient } from "./api.js";
import { readAnswers, renderForm, showViolations } from "./form.js";
import type { Codebook, SubmitOutcome, Task } from "./types.js";
import { validateAnswers } from "./validation.js";

export interface SessionElements {
  form: HTMLElement;
  image: HTMLImageElement;
  gsvLink: HTMLAnchorElement;
  taskLabel: HTMLElement;
  status: HTMLElement;
}

export class LabelSession {
  codebook!: Codebook;
  current: Task | null = null;
  private shownAt = 0;

  constructor(
    private api: ApiClient,
    private raterId: string,
    private ui: SessionElements,
    private now: () => number = () => Date.now(),
  ) {}

  async start(): Promise<void> {
    this.codebook = await this.api.fetchSchema();
    await this.advance();
  }

  async advance(): Promise<void> {
    this.current = await this.api.nextTask(this.raterId);
    if (this.current === null) {
      this.ui.taskLabel.textContent = "All assigned tasks are complete.";
      this.ui.form.innerHTML = "";
      this.ui.status.textContent = "done";
      return;
    }
    this.ui.taskLabel.textContent =
      `${this.current.task_id} (${this.current.lat.toFixed(6)}, ${this.current.lon.toFixed(6)})`;
    this.ui.image.src = this.current.image_url;
    this.ui.gsvLink.href = this.current.gsv_url;
    renderForm(this.ui.form, this.codebook);
    this.ui.status.textContent = "";
    this.shownAt = this.now();
  }

  durationS(): number {
    return (this.now() - this.shownAt) / 1000;
  }

  /** Validate locally, then post; returns null when blocked client-side. */
  async submit(): Promise<SubmitOutcome | null> {
    if (this.current === null) return null;
    const answers = readAnswers(this.ui.form, this.codebook);
    const violations = validateAnswers(this.codebook, answers);
    if (violations.length > 0) {
      showViolations(this.ui.form, violations);
      this.ui.status.textContent = `${violations.length} problem(s), nothing sent`;
      return null;
    }
    const outcome = await this.api.submit({
      task_id: this.current.task_id,
      rater_id: this.raterId,
      answers,
      duration_s: this.durationS(),
    });
    if (outcome.status === "accepted") {
      await this.advance();
    } else if (outcome.status === "rejected") {
      // surface server-side violations inline, keep entered answers
      showViolations(this.ui.form, outcome.violations ?? []);
      this.ui.status.textContent = "rejected by server";
    } else {
      this.ui.status.textContent = "already submitted (conflict)";
    }
    return outcome;
  }

  /** Report the task's point as lacking street-view coverage and move on. */
  async flagNoCoverage(): Promise<SubmitOutcome | null> {
    if (this.current === null) return null;
    const outcome = await this.api.submit({
      task_id: this.current.task_id,
      rater_id: this.raterId,
      answers: {},
      duration_s: this.durationS(),
      no_coverage: true,
    });
    if (outcome.status === "accepted") await this.advance();
    return outcome;
  }
}
