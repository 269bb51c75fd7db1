/**
 * Export manifest: what to embed, under which labels, with which prompts.
 *
 * The image folder is labeled by structure, one subdirectory per class
 * name. The classes file fixes the class order (one name per line), the
 * prompt template expands once per class, and an optional victim-logits
 * JSON file supplies the classifier column the bridge itself never
 * computes.
 */
import { readFile, readdir } from "fs/promises";
import path from "path";

const IMAGE_EXTENSIONS = new Set([
  ".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp",
]);

export interface ManifestEntry {
  absPath: string;
  relPath: string; // "<class>/<file>", forward slashes
  label: number;
}

export interface ExportManifest {
  imagesDir: string;
  classNames: string[];
  prompts: string[];
  entries: ManifestEntry[];
  victimLogits: Map<string, Float64Array> | null;
}

export async function buildManifest(opts: {
  imagesDir: string;
  classesFile: string;
  template: string;
  victimLogitsFile?: string;
}): Promise<ExportManifest> {
  const classNames = (await readFile(opts.classesFile, "utf-8"))
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (classNames.length < 2) {
    throw new Error(
      `${opts.classesFile}: need at least 2 class names, found ${classNames.length}`,
    );
  }
  if (new Set(classNames).size !== classNames.length) {
    throw new Error(`${opts.classesFile}: duplicate class names`);
  }

  if (!opts.template.includes("{}")) {
    throw new Error(
      `template ${JSON.stringify(opts.template)} has no {} placeholder for the class name`,
    );
  }
  const prompts = classNames.map((name) => opts.template.replaceAll("{}", name));

  const labelOf = new Map(classNames.map((name, i) => [name, i]));
  const entries: ManifestEntry[] = [];
  for (const dirent of await readdir(opts.imagesDir, { withFileTypes: true })) {
    if (!dirent.isDirectory()) {
      continue; // stray files at the top level carry no label
    }
    const label = labelOf.get(dirent.name);
    if (label === undefined) {
      throw new Error(
        `${opts.imagesDir}/${dirent.name}: directory is not in the class list`,
      );
    }
    const classDir = path.join(opts.imagesDir, dirent.name);
    for (const entry of await readdir(classDir, { withFileTypes: true })) {
      if (!IMAGE_EXTENSIONS.has(path.extname(entry.name).toLowerCase())) {
        continue;
      }
      if (!entry.isFile() && !entry.isSymbolicLink()) {
        continue;
      }
      entries.push({
        absPath: path.join(classDir, entry.name),
        relPath: `${dirent.name}/${entry.name}`,
        label,
      });
    }
  }
  entries.sort((a, b) => (a.relPath < b.relPath ? -1 : a.relPath > b.relPath ? 1 : 0));
  if (entries.length === 0) {
    throw new Error(`${opts.imagesDir}: no images found under any class directory`);
  }

  let victimLogits: Map<string, Float64Array> | null = null;
  if (opts.victimLogitsFile) {
    victimLogits = await readVictimLogits(
      opts.victimLogitsFile, entries, classNames.length,
    );
  }

  return { imagesDir: opts.imagesDir, classNames, prompts, entries, victimLogits };
}

async function readVictimLogits(
  file: string,
  entries: ManifestEntry[],
  numClasses: number,
): Promise<Map<string, Float64Array>> {
  let parsed: unknown;
  try {
    parsed = JSON.parse(await readFile(file, "utf-8"));
  } catch (err) {
    throw new Error(`${file}: not valid JSON (${(err as Error).message})`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new Error(`${file}: expected an object mapping image path to logit array`);
  }
  const map = new Map<string, Float64Array>();
  for (const [key, value] of Object.entries(parsed)) {
    if (
      !Array.isArray(value) ||
      value.length !== numClasses ||
      !value.every((v) => typeof v === "number" && Number.isFinite(v))
    ) {
      throw new Error(
        `${file}: entry ${JSON.stringify(key)} must be an array of ${numClasses} finite numbers`,
      );
    }
    map.set(key, Float64Array.from(value as number[]));
  }
  const missing = entries.filter((e) => !map.has(e.relPath)).map((e) => e.relPath);
  if (missing.length > 0) {
    throw new Error(
      `${file}: no victim logits for ${missing.length} image(s), e.g. ${missing
        .slice(0, 3)
        .join(", ")}`,
    );
  }
  return map;
}
