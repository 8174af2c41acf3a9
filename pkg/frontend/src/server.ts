/**
 * Serve loops: stdio (default, simplest to supervise) and TCP.
 *
 * Requests are answered strictly in arrival order (single model instance,
 * FIFO pipelining). Every parse or model failure becomes an error frame
 * carrying the original id when one could be read.
 */

import { createInterface } from "node:readline";
import { createServer } from "node:net";
import type { Readable, Writable } from "node:stream";
import type { Backend } from "./backends.js";
import { Handshake, encodeFrame, parseRequest } from "./protocol.js";

export interface SessionOptions {
  systemPrompt?: string;
  prefill?: string;
}

function handshakeFor(backend: Backend, opts: SessionOptions): Handshake {
  const hs: Handshake = { vocab_size: backend.vocabSize, tokenizer: backend.tokenizer };
  if (opts.systemPrompt) hs.system_prompt = opts.systemPrompt;
  if (opts.prefill) hs.prefill = opts.prefill;
  return hs;
}

function answer(backend: Backend, line: string): string {
  if (!line.trim()) return "";
  let id: number | null = null;
  try {
    const req = parseRequest(line);
    id = req.id;
    const logits = backend.nextLogits(req.context);
    return encodeFrame({ id, logits });
  } catch (err) {
    const reqId = (err as { requestId?: number | null }).requestId ?? id;
    const message = err instanceof Error ? err.message : String(err);
    return encodeFrame({ id: reqId, error: message });
  }
}

export async function serveStream(
  backend: Backend,
  input: Readable,
  output: Writable,
  opts: SessionOptions = {},
): Promise<void> {
  output.write(encodeFrame(handshakeFor(backend, opts)));
  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    const frame = answer(backend, line);
    if (frame) output.write(frame);
  }
}

export function serveTcp(
  backend: Backend,
  port: number,
  opts: SessionOptions = {},
  onListen?: (port: number) => void,
): void {
  const server = createServer((socket) => {
    serveStream(backend, socket, socket, opts).catch(() => socket.destroy());
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address();
    if (onListen && addr && typeof addr === "object") onListen(addr.port);
  });
}
