import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { Window } from "happy-dom";

const here = dirname(fileURLToPath(import.meta.url));
export const frontendRoot = join(here, "..");

/** A happy-dom document loaded with the real index.html markup. */
export function appDocument(): Document {
  const window = new Window();
  const html = readFileSync(join(frontendRoot, "index.html"), "utf-8");
  window.document.write(html);
  return window.document as unknown as Document;
}
