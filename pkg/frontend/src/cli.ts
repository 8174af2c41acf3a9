/**
 * inkwell-adapter CLI.
 *
 *   serve   --model m.json [--tcp PORT] [--system-prompt S] [--prefill P]
 *   serve   --echo --vocab-size N
 *   quality --original docs.jsonl --rephrased out.jsonl [--out scores.csv]
 *
 * Documents: JSON-lines {"id", "text"} or blank-line-separated UTF-8 blocks.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { EchoBackend, NgramBackend, type Backend } from "./backends.js";
import { NgramModel } from "./ngram.js";
import { serveStream, serveTcp } from "./server.js";
import { qualityCsv } from "./similarity.js";

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(name, argv[++i]);
    } else {
      flags.set(name, true);
    }
  }
  return flags;
}

function loadDocuments(path: string): Array<{ id: string; text: string }> {
  const raw = readFileSync(path, "utf-8");
  if (path.endsWith(".jsonl")) {
    return raw
      .split("\n")
      .filter((line) => line.trim())
      .map((line, i) => {
        const obj = JSON.parse(line) as { id?: unknown; text: string };
        return { id: String(obj.id ?? i), text: obj.text };
      });
  }
  return raw
    .split("\n\n")
    .map((block) => block.trim())
    .filter(Boolean)
    .map((text, i) => ({ id: String(i), text }));
}

function cmdServe(flags: Map<string, string | boolean>): void {
  let backend: Backend;
  let prefill = flags.get("prefill") as string | undefined;
  if (flags.get("echo")) {
    backend = new EchoBackend(Number(flags.get("vocab-size") ?? 8));
  } else {
    const modelPath = flags.get("model");
    if (typeof modelPath !== "string") throw new Error("serve needs --model or --echo");
    backend = new NgramBackend(NgramModel.load(modelPath), prefill);
  }
  const opts = {
    systemPrompt: flags.get("system-prompt") as string | undefined,
    prefill,
  };
  const tcp = flags.get("tcp");
  if (tcp) {
    serveTcp(backend, Number(tcp), opts, (port) => {
      process.stderr.write(`listening on 127.0.0.1:${port}\n`);
    });
  } else {
    void serveStream(backend, process.stdin, process.stdout, opts);
  }
}

function cmdQuality(flags: Map<string, string | boolean>): void {
  const origPath = flags.get("original");
  const rephPath = flags.get("rephrased");
  if (typeof origPath !== "string" || typeof rephPath !== "string") {
    throw new Error("quality needs --original and --rephrased");
  }
  const originals = new Map(loadDocuments(origPath).map((d) => [d.id, d.text]));
  const pairs = loadDocuments(rephPath).map((d) => {
    const original = originals.get(d.id);
    if (original === undefined) throw new Error(`no original for document id ${d.id}`);
    return { id: d.id, original, rephrased: d.text };
  });
  const csv = qualityCsv(pairs);
  const out = flags.get("out");
  if (typeof out === "string") {
    writeFileSync(out, csv);
  } else {
    process.stdout.write(csv);
  }
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    const flags = parseFlags(rest);
    if (command === "serve") cmdServe(flags);
    else if (command === "quality") cmdQuality(flags);
    else {
      process.stderr.write("usage: inkwell-adapter {serve|quality} [flags]\n");
      process.exitCode = 2;
    }
  } catch (err) {
    process.stderr.write(`inkwell-adapter: ${err instanceof Error ? err.message : err}\n`);
    process.exitCode = 2;
  }
}

main();
