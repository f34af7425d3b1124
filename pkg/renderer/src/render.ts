// Headless rendering via jsdom: scripts execute against a real DOM, the
// post-render markup is what gets serialized, so content injected at load
// time survives where a static fetch would miss it.

import { JSDOM, VirtualConsole } from "jsdom";
import { BundleWriter } from "./bundle.js";

export interface RenderJob {
  url: string;
  outDir: string;
  pageCap: number; // homepage plus in-site links up to this many pages
  waitMs: number;  // settle time after the load event, for async injection
  pageTimeoutMs: number;
}

export interface RenderOutcome {
  pageCount: number;
  skipped: { url: string; reason: string }[];
  manifestPath: string;
}

const sleep = (ms: number) => new Promise((res) => setTimeout(res, ms));

async function renderOne(
  url: string,
  waitMs: number,
  timeoutMs: number,
): Promise<{ html: string; links: string[] }> {
  const virtualConsole = new VirtualConsole(); // keep page noise out of ours
  const work = (async () => {
    const dom = await JSDOM.fromURL(url, {
      runScripts: "dangerously",
      resources: "usable",
      pretendToBeVisual: true,
      virtualConsole,
    });
    try {
      await new Promise<void>((resolve) => {
        if (dom.window.document.readyState === "complete") resolve();
        else dom.window.addEventListener("load", () => resolve());
      });
      await sleep(waitMs);
      const links: string[] = [];
      for (const anchor of dom.window.document.querySelectorAll("a[href]")) {
        links.push((anchor as HTMLAnchorElement).href);
      }
      return { html: dom.serialize(), links };
    } finally {
      dom.window.close();
    }
  })();
  let timer: NodeJS.Timeout | undefined;
  const timeout = new Promise<never>((_, reject) => {
    timer = setTimeout(
      () => reject(new Error(`render timeout after ${timeoutMs}ms`)),
      timeoutMs,
    );
  });
  try {
    return await Promise.race([work, timeout]);
  } finally {
    clearTimeout(timer);
  }
}

function sameSite(link: string, origin: URL): boolean {
  try {
    const parsed = new URL(link);
    return (
      (parsed.protocol === "http:" || parsed.protocol === "https:") &&
      parsed.host === origin.host
    );
  } catch {
    return false;
  }
}

function canonical(link: string): string {
  const parsed = new URL(link);
  parsed.hash = "";
  return parsed.href;
}

export async function renderSite(job: RenderJob): Promise<RenderOutcome> {
  const writer = new BundleWriter(job.outDir);
  const outcome: RenderOutcome = { pageCount: 0, skipped: [], manifestPath: "" };
  const origin = new URL(job.url);
  const queue: string[] = [canonical(job.url)];
  const seen = new Set(queue);

  while (queue.length > 0 && writer.pageCount < job.pageCap) {
    const url = queue.shift()!;
    const isHomepage = writer.pageCount === 0 && outcome.skipped.length === 0;
    let rendered;
    try {
      rendered = await renderOne(url, job.waitMs, job.pageTimeoutMs);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      if (isHomepage) {
        throw new Error(`homepage failed to render: ${reason}`);
      }
      outcome.skipped.push({ url, reason });
      writer.addComment(`skipped ${url}: ${reason}`);
      continue;
    }
    writer.addPage({
      url,
      fetchTime: new Date().toISOString(),
      html: rendered.html,
    });
    for (const link of rendered.links) {
      if (!sameSite(link, origin)) continue;
      const normalized = canonical(link);
      if (!seen.has(normalized)) {
        seen.add(normalized);
        queue.push(normalized);
      }
    }
  }

  outcome.pageCount = writer.pageCount;
  outcome.manifestPath = writer.finish();
  return outcome;
}
