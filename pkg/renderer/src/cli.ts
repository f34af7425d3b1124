// CLI: render --url <u> --out <dir> [--pages N] [--wait-ms M]
// Exit 0 on success (skipped pages are noted in manifest comments),
// nonzero when nothing could be rendered at all.

import { renderSite } from "./render.js";

function usage(): never {
  console.error(
    "usage: resipmon-render render --url <u> --out <dir> [--pages N] [--wait-ms M]",
  );
  process.exit(2);
}

function parseArgs(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) usage();
    flags.set(key.slice(2), value);
  }
  return flags;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command !== "render") usage();
  const flags = parseArgs(rest);
  const url = flags.get("url");
  const outDir = flags.get("out");
  if (!url || !outDir) usage();

  const job = {
    url,
    outDir,
    pageCap: Number(flags.get("pages") ?? "100"),
    waitMs: Number(flags.get("wait-ms") ?? "200"),
    pageTimeoutMs: Number(flags.get("page-timeout-ms") ?? "15000"),
  };
  if (Number.isNaN(job.pageCap) || Number.isNaN(job.waitMs)) usage();

  try {
    const outcome = await renderSite(job);
    console.log(
      `rendered ${outcome.pageCount} page(s) to ${outDir}` +
        (outcome.skipped.length ? `, skipped ${outcome.skipped.length}` : ""),
    );
    return 0;
  } catch (err) {
    console.error(`render failed: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

main().then((code) => process.exit(code));
