#!/usr/bin/env node
/**
 * export --images DIR --classes F --template S --out-records F --out-anchors F
 *
 * Embeds a labeled image folder (one subdirectory per class) and the
 * class-name prompts, writing the gate's record and anchor files.
 */
import { realpathSync } from "fs";
import { pathToFileURL } from "url";

import yargs from "yargs";

import { buildManifest } from "./manifest.js";
import { loadModel } from "./model.js";
import { runExport } from "./export.js";

export async function runCli(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .scriptName("embedding-exporter")
    // repeated flags: keep the last value instead of collecting an array
    .parserConfiguration({ "duplicate-arguments-array": false })
    .usage(
      "$0 --images DIR --classes F --template S --out-records F --out-anchors F",
    )
    .option("images", {
      type: "string", demandOption: true,
      describe: "image folder, one subdirectory per class",
    })
    .option("classes", {
      type: "string", demandOption: true,
      describe: "class-name list, one per line, order fixes the label indices",
    })
    .option("template", {
      type: "string", demandOption: true,
      describe: 'prompt template with a {} placeholder, e.g. "a photo of a {}"',
    })
    .option("out-records", { type: "string", demandOption: true })
    .option("out-anchors", { type: "string", demandOption: true })
    .option("model", {
      type: "string", default: "bytegram-64",
      describe: "embedding backend identifier",
    })
    .option("victim-logits", {
      type: "string",
      describe:
        "JSON file mapping <class>/<file> to the classifier's logit array; " +
        "zeros when omitted",
    })
    .strict()
    .help()
    .parse();

  const model = loadModel(args.model);
  const manifest = await buildManifest({
    imagesDir: args.images,
    classesFile: args.classes,
    template: args.template,
    victimLogitsFile: args["victim-logits"],
  });

  const report = await runExport(
    manifest, model, args["out-records"], args["out-anchors"],
  );
  for (const skip of report.skipped) {
    console.error(`skipped ${skip.relPath}: ${skip.reason}`);
  }
  console.log(
    `wrote ${report.written} records (num_classes=${manifest.classNames.length}, ` +
      `embed_dim=${model.dim}) to ${args["out-records"]}, ` +
      `anchors to ${args["out-anchors"]}` +
      (report.skipped.length > 0 ? `; skipped ${report.skipped.length}` : ""),
  );
  return 0;
}

// realpath so the check holds when invoked through the npm bin symlink
const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;

if (invokedDirectly) {
  runCli(process.argv.slice(2))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    });
}
