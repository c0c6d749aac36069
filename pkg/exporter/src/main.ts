/** Batch entry point: writes every bundle under the directory given on argv. */
import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { ExportBundle, allBundles } from "./export.js";

function writeBundle(root: string, bundle: ExportBundle): void {
  const dir = join(root, bundle.name);
  mkdirSync(dir, { recursive: true });
  writeFileSync(join(dir, "model.json"), JSON.stringify(bundle.model, null, 2) + "\n");
  writeFileSync(join(dir, "probes.json"), JSON.stringify(bundle.probes, null, 2) + "\n");
  writeFileSync(join(dir, "provenance.json"), JSON.stringify(bundle.provenance, null, 2) + "\n");
}

function main(): void {
  const outRoot = process.argv[2] ?? "bundles";
  for (const bundle of allBundles()) {
    writeBundle(outRoot, bundle);
    const p = bundle.provenance;
    const note = p.warning ? ` (${p.warning})` : "";
    console.log(
      `${bundle.name}: loss ${p.loss_initial.toExponential(3)} -> ${p.loss_final.toExponential(3)}${note}`,
    );
  }
}

main();
