/**
 * Reader for the primary toolkit's n-gram model files.
 *
 * The math mirrors the trainer exactly: additive smoothing at the longest
 * context suffix that has observations, backing off to the unigram. Both
 * sides compute in float64, so served logits match in-process evaluation to
 * rounding.
 */

import { readFileSync } from "node:fs";

interface ModelFile {
  format: string;
  version: number;
  order: number;
  smoothing: number;
  tokenizer: string;
  vocab: string[];
  counts: Record<string, Record<string, number>>;
}

export class NgramModel {
  readonly order: number;
  readonly smoothing: number;
  readonly tokenizer: string;
  readonly vocab: string[];
  readonly vocabSize: number;
  private counts: Map<string, Map<number, number>> = new Map();
  private totals: Map<string, number> = new Map();

  constructor(doc: ModelFile) {
    if (doc.format !== "inkwell-ngram") {
      throw new Error(`not an inkwell-ngram model file (format=${doc.format})`);
    }
    this.order = doc.order;
    this.smoothing = doc.smoothing;
    this.tokenizer = doc.tokenizer;
    this.vocab = doc.vocab;
    this.vocabSize = doc.vocab.length;
    for (const [ctx, toks] of Object.entries(doc.counts)) {
      const slot = new Map<number, number>();
      let total = 0;
      for (const [tok, count] of Object.entries(toks)) {
        slot.set(Number(tok), count);
        total += count;
      }
      this.counts.set(ctx, slot);
      this.totals.set(ctx, total);
    }
  }

  static load(path: string): NgramModel {
    return new NgramModel(JSON.parse(readFileSync(path, "utf-8")) as ModelFile);
  }

  /** Longest trained suffix of the context, as a comma-joined key. */
  private contextKey(context: number[]): string {
    const tail = context.slice(Math.max(0, context.length - (this.order - 1)));
    for (let start = 0; start <= tail.length; start++) {
      const key = tail.slice(start).join(",");
      if ((this.totals.get(key) ?? 0) > 0) return key;
    }
    return "";
  }

  nextProbs(context: number[]): number[] {
    for (const t of context.slice(Math.max(0, context.length - (this.order - 1)))) {
      if (!Number.isInteger(t) || t < 0 || t >= this.vocabSize) {
        throw new Error(`token id ${t} out of range`);
      }
    }
    const key = this.contextKey(context);
    const total = this.totals.get(key) ?? 0;
    const denom = total + this.smoothing * this.vocabSize;
    const probs = new Array<number>(this.vocabSize).fill(this.smoothing / denom);
    const slot = this.counts.get(key);
    if (slot) {
      for (const [tok, count] of slot) {
        probs[tok] = (count + this.smoothing) / denom;
      }
    }
    return probs;
  }

  nextLogits(context: number[]): number[] {
    return this.nextProbs(context).map(Math.log);
  }

  encode(text: string): number[] {
    const units = this.tokenizer === "word" ? text.split(/\s+/).filter(Boolean) : [...text];
    const index = new Map(this.vocab.map((t, i) => [t, i] as const));
    return units.map((u) => {
      const id = index.get(u);
      if (id === undefined) throw new Error(`token ${JSON.stringify(u)} not in vocabulary`);
      return id;
    });
  }
}
