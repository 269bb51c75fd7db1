/**
 * Writers for the gate's binary file formats.
 *
 * Shared 28-byte little-endian header: magic "PRSM", version u16,
 * kind u8, reserved u8, num_classes u32, embed_dim u32, flags u32,
 * count u64. Vector payloads are float32.
 *
 * Record (version 1, kind 1): id u64, num_classes victim logits, then
 * the embedding when the EMBEDDING flag is set, then, when EVAL is set,
 * a poisoned byte (0 clean / 1 poisoned / 0xFF absent) and an i32 true
 * label.
 *
 * Anchors (version 1, kind 2): the K x d bank stored transposed, d rows
 * of K floats.
 */
import { writeFile } from "fs/promises";

export const HEADER_SIZE = 28;
export const KIND_RECORDS = 1;
export const KIND_ANCHORS = 2;
export const RECORDS_VERSION = 1;
export const ANCHORS_VERSION = 1;
export const FLAG_EMBEDDING = 1;
export const FLAG_EVAL = 4;

const EVAL_ABSENT = 0xff;

export interface ExportRecord {
  id: bigint;
  victimLogits: Float64Array;
  embedding: Float64Array;
  trueLabel: number | null;
}

function packHeader(
  version: number,
  kind: number,
  numClasses: number,
  embedDim: number,
  flags: number,
  count: number,
): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write("PRSM", 0, "ascii");
  buf.writeUInt16LE(version, 4);
  buf.writeUInt8(kind, 6);
  buf.writeUInt8(0, 7);
  buf.writeUInt32LE(numClasses, 8);
  buf.writeUInt32LE(embedDim, 12);
  buf.writeUInt32LE(flags, 16);
  buf.writeBigUInt64LE(BigInt(count), 20);
  return buf;
}

function writeF32(buf: Buffer, offset: number, values: Float64Array): number {
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], offset + 4 * i);
  }
  return offset + 4 * values.length;
}

export async function writeRecordFile(
  path: string,
  records: ExportRecord[],
  numClasses: number,
  embedDim: number,
): Promise<void> {
  if (records.length === 0) {
    throw new Error("refusing to write an empty record file");
  }
  const hasEval = records.some((r) => r.trueLabel !== null);
  const flags = FLAG_EMBEDDING | (hasEval ? FLAG_EVAL : 0);
  const recordSize = 8 + 4 * numClasses + 4 * embedDim + (hasEval ? 5 : 0);

  const buf = Buffer.alloc(HEADER_SIZE + records.length * recordSize);
  packHeader(
    RECORDS_VERSION, KIND_RECORDS, numClasses, embedDim, flags, records.length,
  ).copy(buf, 0);

  let off = HEADER_SIZE;
  for (const rec of records) {
    if (rec.victimLogits.length !== numClasses) {
      throw new Error(
        `record ${rec.id}: ${rec.victimLogits.length} victim logits, expected ${numClasses}`,
      );
    }
    if (rec.embedding.length !== embedDim) {
      throw new Error(
        `record ${rec.id}: embedding dim ${rec.embedding.length}, expected ${embedDim}`,
      );
    }
    buf.writeBigUInt64LE(rec.id, off);
    off += 8;
    off = writeF32(buf, off, rec.victimLogits);
    off = writeF32(buf, off, rec.embedding);
    if (hasEval) {
      if (rec.trueLabel === null) {
        buf.writeUInt8(EVAL_ABSENT, off);
        buf.writeInt32LE(-1, off + 1);
      } else {
        buf.writeUInt8(0, off); // exported ground truth is presumed clean
        buf.writeInt32LE(rec.trueLabel, off + 1);
      }
      off += 5;
    }
  }
  await writeFile(path, buf);
}

/** anchors: one unit row per class, K rows of d floats. */
export async function writeAnchorFile(
  path: string,
  anchors: Float64Array[],
  embedDim: number,
): Promise<void> {
  const numClasses = anchors.length;
  if (numClasses === 0) {
    throw new Error("refusing to write an empty anchor file");
  }
  const buf = Buffer.alloc(HEADER_SIZE + 4 * numClasses * embedDim);
  packHeader(
    ANCHORS_VERSION, KIND_ANCHORS, numClasses, embedDim, 0, numClasses,
  ).copy(buf, 0);
  let off = HEADER_SIZE;
  for (let i = 0; i < embedDim; i++) {
    for (let k = 0; k < numClasses; k++) {
      if (anchors[k].length !== embedDim) {
        throw new Error(
          `anchor ${k}: dim ${anchors[k].length}, expected ${embedDim}`,
        );
      }
      buf.writeFloatLE(anchors[k][i], off);
      off += 4;
    }
  }
  await writeFile(path, buf);
}
