import { describe, expect, it } from "vitest";
import { qualityCsv, similarity } from "../src/similarity.js";

const PASSAGE =
  "The harbour town woke slowly in the grey hours before dawn, when the " +
  "fishing boats still lay against their moorings.";
const PARAPHRASE =
  "The harbour town woke gradually in the grey hours before sunrise, while " +
  "the fishing boats still rested against their moorings.";
const UNRELATED =
  "Quarterly revenue grew 4.2% on stronger widget demand; margins compressed " +
  "as input costs rose across all segments.";

describe("similarity", () => {
  it("identical texts score ~1", () => {
    expect(similarity(PASSAGE, PASSAGE)).toBeCloseTo(1.0, 9);
  });

  it("close paraphrases score high, unrelated texts low", () => {
    // any two English texts share common character n-grams, so the metric's
    // floor sits near 0.7; what matters is the ordering and the gap
    const close = similarity(PASSAGE, PARAPHRASE);
    const far = similarity(PASSAGE, UNRELATED);
    expect(close).toBeGreaterThan(0.9);
    expect(far).toBeLessThan(0.8);
    expect(close - far).toBeGreaterThan(0.15);
  });

  it("fixed pair golden value", () => {
    // frozen from the first run; embedding and hash are deterministic
    expect(similarity("the cat sat on the mat", "a cat sat on a mat")).toBeCloseTo(
      0.799635, 5);
  });

  it("emits the quality csv format", () => {
    const csv = qualityCsv([
      { id: "a", original: PASSAGE, rephrased: PARAPHRASE },
      { id: "b", original: PASSAGE, rephrased: UNRELATED },
    ]);
    const lines = csv.trim().split("\n");
    expect(lines[0]).toBe("id,similarity");
    expect(lines).toHaveLength(3);
    expect(lines[1]).toMatch(/^a,0\.\d{6}$/);
  });
});
