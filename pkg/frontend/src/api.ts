import type { Codebook, Progress, SubmitOutcome, SubmitPayload, Task } from "./types.js";

export class ApiClient {
  constructor(private base: string = "") {}

  async fetchSchema(): Promise<Codebook> {
    const res = await fetch(`${this.base}/api/schema`);
    if (!res.ok) throw new Error(`schema fetch failed: ${res.status}`);
    return res.json();
  }

  /** Next assigned task for the rater, or null when the assignment is complete. */
  async nextTask(raterId: string): Promise<Task | null> {
    const res = await fetch(
      `${this.base}/api/tasks/next?rater=${encodeURIComponent(raterId)}`,
    );
    if (res.status === 204) return null;
    if (!res.ok) throw new Error(`next task failed: ${res.status}`);
    return res.json();
  }

  async submit(payload: SubmitPayload): Promise<SubmitOutcome> {
    const res = await fetch(`${this.base}/api/responses`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (res.status === 201 || res.status === 409 || res.status === 422) {
      return res.json();
    }
    throw new Error(`submit failed: ${res.status}`);
  }

  async progress(): Promise<Progress> {
    const res = await fetch(`${this.base}/api/progress`);
    if (!res.ok) throw new Error(`progress fetch failed: ${res.status}`);
    return res.json();
  }
}
