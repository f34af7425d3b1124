// Snapshot bundle writer. The on-disk format is the contract with the
// ingesting side: a manifest.tsv with one row per page
// (relative_filename, url, fetch_time ISO-8601, render_mode, sha256 of the
// file bytes), "#" comment lines allowed, homepage first, plus one raw
// HTML file per page.

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

export interface RenderedPage {
  url: string;
  fetchTime: string; // ISO-8601
  html: string;
}

export class BundleWriter {
  private rows: string[] = [];
  private count = 0;

  constructor(private readonly dir: string) {
    if (fs.existsSync(dir) && fs.readdirSync(dir).length > 0) {
      throw new Error(`output directory not empty: ${dir}`);
    }
    fs.mkdirSync(dir, { recursive: true });
  }

  addPage(page: RenderedPage): string {
    const name = `page_${String(this.count).padStart(4, "0")}.html`;
    this.count += 1;
    const bytes = Buffer.from(page.html, "utf-8");
    fs.writeFileSync(path.join(this.dir, name), bytes);
    const digest = createHash("sha256").update(bytes).digest("hex");
    this.rows.push(
      [name, page.url, page.fetchTime, "dynamic", digest].join("\t"),
    );
    return name;
  }

  addComment(text: string): void {
    this.rows.push(`# ${text.replace(/\n/g, " ")}`);
  }

  get pageCount(): number {
    return this.count;
  }

  finish(): string {
    const manifest = path.join(this.dir, "manifest.tsv");
    fs.writeFileSync(manifest, this.rows.map((r) => r + "\n").join(""));
    return manifest;
  }
}
