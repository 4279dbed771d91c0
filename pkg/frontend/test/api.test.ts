import { describe, expect, it } from "vitest";

import { ApiError, SelectionApi, parsePairResponse } from "../src/api.js";
import { pseudoWord, renderTranscript } from "../src/pseudowords.js";
import { MockService } from "./mock_service.js";

describe("pair response parsing", () => {
  it("accepts well-formed tickets", () => {
    const parsed = parsePairResponse({
      exhausted: false,
      ticket: {
        ticket_id: "t",
        utterance_id: "u",
        stage: 1,
        transcript1: [0, 4],
        transcript2: [2],
        issued_at: 12.5,
      },
    });
    expect(parsed.exhausted).toBe(false);
    if (!parsed.exhausted) {
      expect(parsed.ticket.transcript1).toEqual([0, 4]);
    }
  });

  it("accepts exhausted markers", () => {
    expect(parsePairResponse({ exhausted: true, complete: false })).toEqual({
      exhausted: true,
      complete: false,
    });
  });

  it("rejects malformed payloads", () => {
    expect(() => parsePairResponse({})).toThrow(ApiError);
    expect(() => parsePairResponse({ exhausted: false, ticket: { ticket_id: 5 } }))
      .toThrow(ApiError);
    expect(() =>
      parsePairResponse({
        exhausted: false,
        ticket: {
          ticket_id: "t", utterance_id: "u", stage: 0,
          transcript1: ["a"], transcript2: [], issued_at: 0,
        },
      }),
    ).toThrow(ApiError);
  });
});

describe("api client against the mock service", () => {
  it("round-trips the pair flow", async () => {
    const mock = new MockService([
      { utteranceId: "u0", candidate1: [1], candidate2: [2], c1Side: "left" },
    ]);
    const api = new SelectionApi("", mock.fetch);
    expect((await api.session()).total_pairs).toBe(1);
    const pair = await api.nextPair();
    expect(pair.exhausted).toBe(false);
    if (!pair.exhausted) {
      expect(await api.submit(pair.ticket.ticket_id, "left")).toBe(true);
      // duplicate becomes a conflict, reported as false
      expect(await api.submit(pair.ticket.ticket_id, "right")).toBe(false);
    }
    expect((await api.status()).complete).toBe(true);
  });

  it("maps choices through the recorded permutation", async () => {
    const mock = new MockService([
      { utteranceId: "u0", candidate1: [1], candidate2: [2], c1Side: "right" },
    ]);
    const api = new SelectionApi("", mock.fetch);
    const pair = await api.nextPair();
    if (!pair.exhausted) {
      await api.submit(pair.ticket.ticket_id, "left");
    }
    expect(mock.rewards).toEqual([0]); // left pane held candidate 2
  });
});

describe("pseudo-word rendering", () => {
  it("is deterministic and injective over a vocabulary", () => {
    const seen = new Map<string, number>();
    for (let id = 0; id < 500; id++) {
      const word = pseudoWord(id);
      expect(word).toMatch(/^[a-z]{4}$/);
      expect(seen.has(word), `collision at ${id}`).toBe(false);
      seen.set(word, id);
      expect(pseudoWord(id)).toBe(word);
    }
  });

  it("renders transcripts verbatim in order", () => {
    expect(renderTranscript([3, 3, 7])).toBe(
      [pseudoWord(3), pseudoWord(3), pseudoWord(7)].join(" "),
    );
  });
});
