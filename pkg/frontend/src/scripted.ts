/** Headless scripted annotator: drives a session to completion, choosing
    sides with a provided policy.  Used for end-to-end checks where the
    policy picks the transcript with the lower true WER. */

import { SelectionApi, type Choice, type PairTicket } from "./api.js";

export type ChoicePolicy = (ticket: PairTicket) => Choice;

export async function runScriptedSession(
  api: SelectionApi,
  policy: ChoicePolicy,
): Promise<number> {
  let answered = 0;
  for (;;) {
    const resp = await api.nextPair();
    if (resp.exhausted) {
      if (resp.complete) {
        return answered;
      }
      // other annotators hold leases; brief pause then poll again
      await new Promise((resolve) => setTimeout(resolve, 20));
      continue;
    }
    const accepted = await api.submit(resp.ticket.ticket_id, policy(resp.ticket));
    if (accepted) {
      answered += 1;
    }
  }
}

/** Word-level edit distance; mirrors the engine's WER numerator. */
export function editDistance(a: readonly number[], b: readonly number[]): number {
  const rows = a.length + 1;
  const cols = b.length + 1;
  let prev = Array.from({ length: cols }, (_, j) => j);
  for (let i = 1; i < rows; i++) {
    const cur = [i];
    for (let j = 1; j < cols; j++) {
      const sub = prev[j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1);
      cur.push(Math.min(sub, prev[j] + 1, cur[j - 1] + 1));
    }
    prev = cur;
  }
  return prev[cols - 1];
}

/** Policy that picks the true-lower-WER side, ties to the left pane. */
export function lowerWerPolicy(
  references: ReadonlyMap<string, readonly number[]>,
): ChoicePolicy {
  return (ticket) => {
    const ref = references.get(ticket.utterance_id);
    if (!ref) {
      throw new Error(`no reference for ${ticket.utterance_id}`);
    }
    const left = editDistance(ticket.transcript1, ref);
    const right = editDistance(ticket.transcript2, ref);
    return left <= right ? "left" : "right";
  };
}
