// Client-side mirror of the server's response-shape rules, expressed against
// the same codebook document, so anything we submit passes server validation.

import type { AnswerJson, AnswersMap, Codebook, Violation } from "./types.js";

function answerKind(a: AnswerJson): string {
  if ("choice" in a) return "single_choice";
  if ("choices" in a) return "multi_choice";
  if ("count" in a) return "count";
  return "free_text";
}

export function validateAnswers(cb: Codebook, answers: AnswersMap): Violation[] {
  const violations: Violation[] = [];
  const known = new Set(cb.variables.map((v) => v.key));
  for (const key of Object.keys(answers)) {
    if (!known.has(key)) violations.push({ variable_key: key, reason: "unknown variable" });
  }
  for (const variable of cb.variables) {
    const answer = answers[variable.key];
    if (answer === undefined) {
      if (variable.required) {
        violations.push({ variable_key: variable.key, reason: "missing required answer" });
      }
      continue;
    }
    if (answerKind(answer) !== variable.kind) {
      violations.push({
        variable_key: variable.key,
        reason: `answer kind ${answerKind(answer)} does not match ${variable.kind}`,
      });
      continue;
    }
    const codes = new Set((variable.options ?? []).map((o) => o.code));
    if ("choice" in answer && !codes.has(answer.choice)) {
      violations.push({ variable_key: variable.key, reason: `unknown option code ${answer.choice}` });
    } else if ("choices" in answer) {
      if (answer.choices.length === 0) {
        violations.push({
          variable_key: variable.key,
          reason: "multi_choice answer must select at least one code",
        });
      } else {
        const bad = answer.choices.filter((c) => !codes.has(c));
        if (bad.length > 0) {
          violations.push({ variable_key: variable.key, reason: `unknown option code(s) ${bad}` });
        }
      }
    } else if ("count" in answer) {
      const lo = variable.min_count ?? 0;
      const hi = variable.max_count ?? Number.MAX_SAFE_INTEGER;
      if (!Number.isInteger(answer.count) || answer.count < lo || answer.count > hi) {
        violations.push({
          variable_key: variable.key,
          reason: `count ${answer.count} outside [${lo}, ${hi}]`,
        });
      }
    }
  }
  return violations;
}
