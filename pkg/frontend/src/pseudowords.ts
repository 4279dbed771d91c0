/** Deterministic word-id to pseudo-word rendering (purely cosmetic).
    Synthetic transcripts are arrays of integer ids; showing them as
    pronounceable two-syllable words makes pair comparison less alien. */

const CONSONANTS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS = ["a", "e", "i", "o", "u"];

const SYLLABLES = CONSONANTS.length * VOWELS.length; // 70

function syllable(index: number): string {
  const c = CONSONANTS[index % CONSONANTS.length];
  const v = VOWELS[Math.floor(index / CONSONANTS.length) % VOWELS.length];
  return c + v;
}

export function pseudoWord(id: number): string {
  if (!Number.isInteger(id) || id < 0) {
    return `<${id}>`;
  }
  const first = syllable(id % SYLLABLES);
  const second = syllable(Math.floor(id / SYLLABLES) % SYLLABLES);
  return first + second;
}

export function renderTranscript(words: number[]): string {
  return words.map(pseudoWord).join(" ");
}
