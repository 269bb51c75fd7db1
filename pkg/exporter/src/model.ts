/**
 * Pluggable embedding backend.
 *
 * A real deployment wraps an actual vision-language model here (see the
 * README). The built-in "bytegram" backend is a deterministic stand-in:
 * a byte-frequency histogram pushed through a seeded random projection,
 * L2-normalized. It carries no semantics, but it is reproducible from
 * its written definition, which is exactly what the format bridge needs
 * to be testable offline.
 */

export interface EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  embedImage(bytes: Uint8Array): Promise<Float64Array>;
  embedText(text: string): Promise<Float64Array>;
}

const MASK64 = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;

function splitmix64(x: bigint): bigint {
  let z = x & MASK64;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

function fnv1a64(bytes: Uint8Array): bigint {
  let h = 0xcbf29ce484222325n;
  for (const b of bytes) {
    h = ((h ^ BigInt(b)) * 0x100000001b3n) & MASK64;
  }
  return h;
}

/**
 * Projection matrix entry (i, j), uniform in [-1, 1). The full recipe,
 * for anyone reimplementing it:
 *
 *   seed    = fnv1a64(utf8(modelId))
 *   idx     = i * 256 + j
 *   h       = splitmix64((seed + GOLDEN * (idx + 1)) mod 2^64)
 *   entry   = (h >> 11) / 2^53 * 2 - 1
 */
function projectionEntry(seed: bigint, idx: number): number {
  const h = splitmix64((seed + GOLDEN * BigInt(idx + 1)) & MASK64);
  return (Number(h >> 11n) / 2 ** 53) * 2 - 1;
}

/** Byte-frequency features: counts over 256 bins divided by the length. */
function byteHistogram(bytes: Uint8Array): Float64Array {
  const f = new Float64Array(256);
  for (const b of bytes) f[b] += 1;
  for (let j = 0; j < 256; j++) f[j] /= bytes.length;
  return f;
}

export function byteGramModel(dim: number, id?: string): EmbeddingModel {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`embedding dim must be a positive integer, got ${dim}`);
  }
  const modelId = id ?? `bytegram-${dim}`;
  const seed = fnv1a64(new TextEncoder().encode(modelId));

  // The projection is pure function of (modelId, dim); build it once.
  const projection = new Float64Array(dim * 256);
  for (let idx = 0; idx < dim * 256; idx++) {
    projection[idx] = projectionEntry(seed, idx);
  }

  function embed(bytes: Uint8Array): Float64Array {
    if (bytes.length === 0) {
      throw new Error("cannot embed empty input");
    }
    const f = byteHistogram(bytes);
    const e = new Float64Array(dim);
    for (let i = 0; i < dim; i++) {
      let acc = 0;
      for (let j = 0; j < 256; j++) {
        acc += projection[i * 256 + j] * f[j];
      }
      e[i] = acc;
    }
    let norm = 0;
    for (let i = 0; i < dim; i++) norm += e[i] * e[i];
    norm = Math.sqrt(norm);
    if (norm < 1e-12) {
      throw new Error("degenerate input: projected feature vector has zero norm");
    }
    for (let i = 0; i < dim; i++) e[i] /= norm;
    return e;
  }

  return {
    id: modelId,
    dim,
    embedImage: async (bytes) => embed(bytes),
    embedText: async (text) => embed(new TextEncoder().encode(text)),
  };
}

/** Resolve a model identifier. Built in: "bytegram-<dim>". */
export function loadModel(id: string): EmbeddingModel {
  const m = /^bytegram-(\d+)$/.exec(id);
  if (m) {
    return byteGramModel(parseInt(m[1], 10), id);
  }
  throw new Error(
    `unknown model ${JSON.stringify(id)}; built-in backends: bytegram-<dim>. ` +
      "Wrap your own model in the EmbeddingModel interface to use it here.",
  );
}
