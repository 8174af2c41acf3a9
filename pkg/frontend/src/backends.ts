/** Model backends the server can expose. */

import { NgramModel } from "./ngram.js";

export interface Backend {
  vocabSize: number;
  tokenizer: string;
  nextLogits(context: number[]): number[];
}

export class NgramBackend implements Backend {
  readonly vocabSize: number;
  readonly tokenizer: string;
  private prefillIds: number[] = [];

  constructor(private model: NgramModel, prefill?: string) {
    this.vocabSize = model.vocabSize;
    this.tokenizer = model.tokenizer;
    // response prefill: these tokens precede every request context
    if (prefill) this.prefillIds = model.encode(prefill);
  }

  nextLogits(context: number[]): number[] {
    return this.model.nextLogits([...this.prefillIds, ...context]);
  }
}

/** Deterministic context-dependent logits, for loopback conformance runs. */
export class EchoBackend implements Backend {
  readonly tokenizer = "echo";

  constructor(readonly vocabSize: number) {}

  nextLogits(context: number[]): number[] {
    const last = context.length ? context[context.length - 1] % this.vocabSize : 0;
    const out = new Array<number>(this.vocabSize);
    for (let i = 0; i < this.vocabSize; i++) {
      out[i] = Math.sin(i + 0.1 * context.length) + 0.01 * last;
    }
    return out;
  }
}
