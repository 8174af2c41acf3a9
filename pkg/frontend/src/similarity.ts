/**
 * Per-document similarity scores for the eval harness.
 *
 * Texts embed as L2-normalized bags of hashed character n-grams (1..3),
 * compared by cosine. Deterministic and dependency-free, so scores are
 * stable across machines; the output CSV (id,similarity) feeds straight
 * into the primary harness's quality column.
 */

const DIM = 4096;
const FNV_PRIME = 0x01000193;

function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, FNV_PRIME);
  }
  return h >>> 0;
}

export function embed(text: string): Float64Array {
  const vec = new Float64Array(DIM);
  const norm = text.toLowerCase();
  for (let n = 1; n <= 3; n++) {
    for (let i = 0; i + n <= norm.length; i++) {
      vec[fnv1a(norm.slice(i, i + n)) % DIM] += 1;
    }
  }
  let ss = 0;
  for (let i = 0; i < DIM; i++) ss += vec[i] * vec[i];
  const scale = ss > 0 ? 1 / Math.sqrt(ss) : 0;
  for (let i = 0; i < DIM; i++) vec[i] *= scale;
  return vec;
}

export function similarity(a: string, b: string): number {
  const va = embed(a);
  const vb = embed(b);
  let dot = 0;
  for (let i = 0; i < DIM; i++) dot += va[i] * vb[i];
  return dot;
}

export function qualityCsv(pairs: Array<{ id: string; original: string; rephrased: string }>): string {
  const lines = ["id,similarity"];
  for (const { id, original, rephrased } of pairs) {
    lines.push(`${id},${similarity(original, rephrased).toFixed(6)}`);
  }
  return lines.join("\n") + "\n";
}
