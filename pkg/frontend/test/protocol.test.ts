import { describe, expect, it } from "vitest";
import { PassThrough } from "node:stream";
import { EchoBackend } from "../src/backends.js";
import { parseRequest } from "../src/protocol.js";
import { serveStream } from "../src/server.js";

async function session(lines: string[], backend = new EchoBackend(4)): Promise<string[]> {
  const input = new PassThrough();
  const output = new PassThrough();
  const done = serveStream(backend, input, output, { prefill: undefined });
  for (const line of lines) input.write(line + "\n");
  input.end();
  await done;
  return output.read().toString("utf-8").trim().split("\n");
}

describe("request parsing", () => {
  it("accepts well-formed frames", () => {
    expect(parseRequest('{"id": 3, "context": [1, 2]}')).toEqual({ id: 3, context: [1, 2] });
  });

  it("rejects garbage with a reason", () => {
    expect(() => parseRequest("not json")).toThrow(/malformed/);
    expect(() => parseRequest('{"id": 1}')).toThrow(/context/);
    expect(() => parseRequest('{"id": 1, "context": ["a"]}')).toThrow(/integers/);
  });
});

describe("serve loop", () => {
  it("sends handshake first, answers in order", async () => {
    const frames = (await session([
      '{"id": 0, "context": []}',
      '{"id": 1, "context": [2]}',
    ])).map((line) => JSON.parse(line));
    expect(frames[0]).toMatchObject({ vocab_size: 4, tokenizer: "echo" });
    expect(frames[1].id).toBe(0);
    expect(frames[1].logits).toHaveLength(4);
    expect(frames[2].id).toBe(1);
  });

  it("answers malformed lines with error frames and keeps serving", async () => {
    const frames = (await session([
      "this is not json",
      '{"id": 7, "nonsense": true}',
      '{"id": 8, "context": [1]}',
    ])).map((line) => JSON.parse(line));
    expect(frames[1]).toMatchObject({ id: null });
    expect(frames[1].error).toMatch(/malformed/);
    expect(frames[2]).toMatchObject({ id: 7 });
    expect(frames[2].error).toBeDefined();
    expect(frames[3]).toMatchObject({ id: 8 });
    expect(frames[3].logits).toHaveLength(4);
  });

  it("declares paraphrase session metadata in the handshake", async () => {
    const input = new PassThrough();
    const output = new PassThrough();
    const done = serveStream(new EchoBackend(2), input, output, {
      systemPrompt: "You are a text rephrasing assistant.",
      prefill: "Rephrased text:",
    });
    input.end();
    await done;
    const handshake = JSON.parse(output.read().toString("utf-8").split("\n")[0]);
    expect(handshake.system_prompt).toMatch(/rephrasing/);
    expect(handshake.prefill).toBe("Rephrased text:");
  });
});
