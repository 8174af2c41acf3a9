/**
 * Wire protocol frames: newline-delimited JSON.
 *
 * Server sends one handshake line declaring {vocab_size, tokenizer} plus
 * optional session metadata, then answers {id, context} requests with
 * {id, logits} or {id, error}. Malformed input becomes an error frame,
 * never a dead connection.
 */

export interface Handshake {
  vocab_size: number;
  tokenizer: string;
  system_prompt?: string;
  prefill?: string;
}

export interface LogitRequest {
  id: number | null;
  context: number[];
}

export type ResponseFrame =
  | { id: number | null; logits: number[] }
  | { id: number | null; error: string };

export function encodeFrame(obj: unknown): string {
  return JSON.stringify(obj) + "\n";
}

/** Parse one request line; throws with a human-readable reason. */
export function parseRequest(line: string): LogitRequest {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    throw new Error("malformed JSON");
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new Error("frame is not an object");
  }
  const rec = obj as Record<string, unknown>;
  const id = typeof rec.id === "number" && Number.isInteger(rec.id) ? rec.id : null;
  const context = rec.context;
  if (!Array.isArray(context) || !context.every((t) => Number.isInteger(t))) {
    const err = new Error("context must be a list of integers") as Error & {
      requestId: number | null;
    };
    err.requestId = id;
    throw err;
  }
  return { id, context: context as number[] };
}
