/**
 * The bridge itself: embed every manifest image and class prompt, write
 * the record and anchor files. No defense logic lives here; the output
 * is plain input data for the gate.
 */
import { readFile } from "fs/promises";

import { ExportManifest } from "./manifest.js";
import { EmbeddingModel } from "./model.js";
import { ExportRecord, writeAnchorFile, writeRecordFile } from "./format.js";

export interface ExportReport {
  written: number;
  skipped: { relPath: string; reason: string }[];
  /** record id -> image path, in file order */
  idToPath: [string, string][];
}

export async function runExport(
  manifest: ExportManifest,
  model: EmbeddingModel,
  outRecords: string,
  outAnchors: string,
): Promise<ExportReport> {
  const anchors: Float64Array[] = [];
  for (const prompt of manifest.prompts) {
    anchors.push(await model.embedText(prompt));
  }

  const numClasses = manifest.classNames.length;
  const records: ExportRecord[] = [];
  const skipped: { relPath: string; reason: string }[] = [];
  const idToPath: [string, string][] = [];

  for (const entry of manifest.entries) {
    let embedding: Float64Array;
    try {
      embedding = await model.embedImage(await readFile(entry.absPath));
    } catch (err) {
      skipped.push({ relPath: entry.relPath, reason: (err as Error).message });
      continue;
    }
    const id = BigInt(records.length);
    records.push({
      id,
      victimLogits:
        manifest.victimLogits?.get(entry.relPath) ?? new Float64Array(numClasses),
      embedding,
      trueLabel: entry.label,
    });
    idToPath.push([id.toString(), entry.relPath]);
  }

  if (records.length === 0) {
    throw new Error("every image was skipped; nothing to write");
  }

  await writeRecordFile(outRecords, records, numClasses, model.dim);
  await writeAnchorFile(outAnchors, anchors, model.dim);
  return { written: records.length, skipped, idToPath };
}
