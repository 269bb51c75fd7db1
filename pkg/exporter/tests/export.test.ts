import { execFile } from "child_process";
import { mkdir, mkdtemp, readFile, symlink, writeFile } from "fs/promises";
import { tmpdir } from "os";
import path from "path";
import { fileURLToPath } from "url";
import { promisify } from "util";

import { describe, expect, test } from "vitest";

import { runExport } from "../src/export.js";
import { HEADER_SIZE } from "../src/format.js";
import { buildManifest } from "../src/manifest.js";
import { byteGramModel, loadModel } from "../src/model.js";
import { runCli } from "../src/cli.js";

const execFileP = promisify(execFile);
const TESTS_DIR = path.dirname(fileURLToPath(import.meta.url));

/** Deterministic pseudo-image bytes; tag picks the content. */
function fakeImage(tag: number, length = 400): Uint8Array {
  const bytes = new Uint8Array(length);
  let x = tag * 2654435761 + 1;
  for (let i = 0; i < length; i++) {
    x = (x * 1103515245 + 12345) & 0x7fffffff;
    bytes[i] = (x >> 16) & 0xff;
  }
  return bytes;
}

async function makeDataset(
  classNames: string[],
  perClass: number,
): Promise<{ dir: string; imagesDir: string; classesFile: string }> {
  const dir = await mkdtemp(path.join(tmpdir(), "exporter-"));
  const classesFile = path.join(dir, "classes.txt");
  await writeFile(classesFile, classNames.join("\n") + "\n");
  const imagesDir = path.join(dir, "images");
  await mkdir(imagesDir);
  let tag = 1;
  for (const name of classNames) {
    await mkdir(path.join(imagesDir, name));
    for (let i = 0; i < perClass; i++) {
      const file = `img_${String(i).padStart(2, "0")}.png`;
      await writeFile(path.join(imagesDir, name, file), fakeImage(tag++));
    }
  }
  return { dir, imagesDir, classesFile };
}

async function validateWithPrimary(records: string, anchors: string) {
  const { stdout } = await execFileP(
    "python3",
    [
      path.join(TESTS_DIR, "validate_with_primary.py"),
      "--records", records, "--anchors", anchors,
    ],
    { maxBuffer: 64 * 1024 * 1024 },
  );
  return JSON.parse(stdout);
}

describe("export structure", () => {
  test("ten images, two classes: files pass the gate's own readers", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 5);
    const model = byteGramModel(64);
    const manifest = await buildManifest({
      imagesDir, classesFile, template: "a photo of a {}",
    });
    const outRecords = path.join(dir, "out.rec");
    const outAnchors = path.join(dir, "out.anchor");
    const report = await runExport(manifest, model, outRecords, outAnchors);
    expect(report.written).toBe(10);
    expect(report.skipped).toEqual([]);

    const seen = await validateWithPrimary(outRecords, outAnchors);
    expect(seen.count).toBe(10);
    expect(seen.num_classes).toBe(2);
    expect(seen.embed_dim).toBe(64);
    expect(seen.has_embedding).toBe(true);
    expect(seen.has_text_logits).toBe(false);
    expect(seen.has_eval).toBe(true);
    expect(seen.ids).toEqual([...Array(10).keys()].map(String));
    expect(seen.true_labels).toEqual([0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    expect(seen.poisoned).toEqual(Array(10).fill(false));
    for (const row of seen.victim_logits) {
      expect(row).toEqual([0, 0]);
    }
    for (const embedding of seen.embeddings) {
      expect(embedding).toHaveLength(64);
    }
    expect(seen.anchor_rows).toBe(2);
    expect(seen.anchor_dim).toBe(64);
  });

  test("duplicate image bytes produce identical embedding rows", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 2);
    const shared = fakeImage(777);
    await writeFile(path.join(imagesDir, "cat", "twin.png"), shared);
    await writeFile(path.join(imagesDir, "dog", "twin.png"), shared);

    const manifest = await buildManifest({
      imagesDir, classesFile, template: "a photo of a {}",
    });
    const outRecords = path.join(dir, "out.rec");
    const report = await runExport(
      manifest, byteGramModel(64), outRecords, path.join(dir, "out.anchor"),
    );

    const byPath = new Map(report.idToPath.map(([id, p]) => [p, Number(id)]));
    const first = byPath.get("cat/twin.png")!;
    const second = byPath.get("dog/twin.png")!;

    // record: id u64, 2 victim f32, 64 embedding f32, eval byte + i32
    const recordSize = 8 + 4 * 2 + 4 * 64 + 5;
    const embedOffset = 8 + 4 * 2;
    const data = await readFile(outRecords);
    const sliceOf = (index: number) => {
      const start = HEADER_SIZE + index * recordSize + embedOffset;
      return data.subarray(start, start + 4 * 64);
    };
    expect(sliceOf(first).equals(sliceOf(second))).toBe(true);
    expect(sliceOf(first).equals(sliceOf(0))).toBe(false);
  });

  test("separately constructed models embed identically", async () => {
    const a = await byteGramModel(32).embedText("a photo of a newt");
    const b = await loadModel("bytegram-32").embedText("a photo of a newt");
    expect(Array.from(a)).toEqual(Array.from(b));
  });
});

describe("anchor fidelity", () => {
  test("exported anchor cosines match the independent reference within 1e-4", async () => {
    const classNames = ["airplane", "automobile", "bird", "cat"];
    const { dir, imagesDir, classesFile } = await makeDataset(classNames, 1);
    const template = "a photo of a {}";
    const manifest = await buildManifest({ imagesDir, classesFile, template });
    const outAnchors = path.join(dir, "out.anchor");
    await runExport(
      manifest, byteGramModel(64), path.join(dir, "out.rec"), outAnchors,
    );

    // reconstruct the K x d bank from the file's transposed f32 payload
    const data = await readFile(outAnchors);
    const k = classNames.length;
    const d = 64;
    const bank = Array.from({ length: k }, () => new Float64Array(d));
    for (let i = 0; i < d; i++) {
      for (let c = 0; c < k; c++) {
        bank[c][i] = data.readFloatLE(HEADER_SIZE + 4 * (i * k + c));
      }
    }
    const cosine = (u: Float64Array, v: Float64Array) => {
      let dot = 0;
      for (let i = 0; i < d; i++) dot += u[i] * v[i];
      return dot;
    };

    const { stdout } = await execFileP("python3", [
      path.join(TESTS_DIR, "reference_embed.py"),
      "--classes", classesFile, "--template", template, "--dim", "64",
    ]);
    const reference: number[][] = JSON.parse(stdout);

    let worst = 0;
    for (let a = 0; a < k; a++) {
      for (let b = 0; b < k; b++) {
        worst = Math.max(worst, Math.abs(cosine(bank[a], bank[b]) - reference[a][b]));
      }
    }
    expect(worst).toBeLessThanOrEqual(1e-4);
  });
});

describe("inputs", () => {
  test("unreadable image is skipped with a report", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 2);
    await symlink(
      path.join(dir, "no-such-file"),
      path.join(imagesDir, "cat", "broken.png"),
    );
    const manifest = await buildManifest({
      imagesDir, classesFile, template: "a photo of a {}",
    });
    const outRecords = path.join(dir, "out.rec");
    const report = await runExport(
      manifest, byteGramModel(64), outRecords, path.join(dir, "out.anchor"),
    );
    expect(report.written).toBe(4);
    expect(report.skipped).toHaveLength(1);
    expect(report.skipped[0].relPath).toBe("cat/broken.png");

    const data = await readFile(outRecords);
    expect(data.readBigUInt64LE(20)).toBe(4n);
  });

  test("victim logits come from the supplied file", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 1);
    const logitsFile = path.join(dir, "victim.json");
    await writeFile(logitsFile, JSON.stringify({
      "cat/img_00.png": [3, -1],
      "dog/img_00.png": [-2, 5],
    }));
    const manifest = await buildManifest({
      imagesDir, classesFile, template: "a photo of a {}",
      victimLogitsFile: logitsFile,
    });
    const outRecords = path.join(dir, "out.rec");
    const outAnchors = path.join(dir, "out.anchor");
    await runExport(manifest, byteGramModel(64), outRecords, outAnchors);

    const seen = await validateWithPrimary(outRecords, outAnchors);
    expect(seen.victim_logits).toEqual([[3, -1], [-2, 5]]);
  });

  test("victim logits file missing an image is rejected", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 1);
    const logitsFile = path.join(dir, "victim.json");
    await writeFile(logitsFile, JSON.stringify({ "cat/img_00.png": [3, -1] }));
    await expect(
      buildManifest({
        imagesDir, classesFile, template: "a photo of a {}",
        victimLogitsFile: logitsFile,
      }),
    ).rejects.toThrow(/no victim logits/);
  });

  test("template without a placeholder is rejected", async () => {
    const { imagesDir, classesFile } = await makeDataset(["cat", "dog"], 1);
    await expect(
      buildManifest({ imagesDir, classesFile, template: "a photo" }),
    ).rejects.toThrow(/placeholder/);
  });

  test("unknown class directory is rejected", async () => {
    const { imagesDir, classesFile } = await makeDataset(["cat", "dog"], 1);
    await mkdir(path.join(imagesDir, "ferret"));
    await writeFile(path.join(imagesDir, "ferret", "x.png"), fakeImage(9));
    await expect(
      buildManifest({ imagesDir, classesFile, template: "a photo of a {}" }),
    ).rejects.toThrow(/not in the class list/);
  });
});

describe("cli", () => {
  test("full flag set runs end to end", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 3);
    const outRecords = path.join(dir, "cli.rec");
    const outAnchors = path.join(dir, "cli.anchor");
    const code = await runCli([
      "--images", imagesDir,
      "--classes", classesFile,
      "--template", "a photo of a {}",
      "--out-records", outRecords,
      "--out-anchors", outAnchors,
      "--model", "bytegram-48",
    ]);
    expect(code).toBe(0);

    const seen = await validateWithPrimary(outRecords, outAnchors);
    expect(seen.count).toBe(6);
    expect(seen.embed_dim).toBe(48);
    expect(seen.anchor_dim).toBe(48);
  });

  test("repeated flag keeps the last value", async () => {
    const { dir, imagesDir, classesFile } = await makeDataset(["cat", "dog"], 2);
    const outRecords = path.join(dir, "dup.rec");
    const outAnchors = path.join(dir, "dup.anchor");
    const code = await runCli([
      "--images", path.join(dir, "does-not-exist"),
      "--images", imagesDir,
      "--classes", classesFile,
      "--template", "a photo of a {}",
      "--out-records", outRecords,
      "--out-anchors", outAnchors,
    ]);
    expect(code).toBe(0);
    const seen = await validateWithPrimary(outRecords, outAnchors);
    expect(seen.count).toBe(4);
  });
});
