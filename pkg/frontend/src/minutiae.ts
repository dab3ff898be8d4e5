/** Parser for the MINUTIAE v1 text format used by sample files.
 *
 * Line 1 is `MINUTIAE v1 <count>`; each of the following count lines is
 * `<x> <y> <angle> <E|B>` (single spaces).  Trailing blank lines at the end
 * of the document are tolerated, nothing else is.
 */

import type { MinutiaPoint } from "./gateway.js";

const HEADER_RE = /^MINUTIAE v1 (0|[1-9][0-9]*)$/;
const RECORD_RE = /^([0-9]+) ([0-9]+) ([0-9]+) ([EB])$/;

export function parseMinutiae(text: string): MinutiaPoint[] {
  const lines = text.split("\n");
  while (lines.length > 0 && lines[lines.length - 1].trim() === "") lines.pop();
  if (lines.length === 0) throw new Error("empty template document");
  const header = HEADER_RE.exec(lines[0]);
  if (header === null) throw new Error(`malformed header: ${JSON.stringify(lines[0])}`);
  const count = Number(header[1]);
  const records = lines.slice(1);
  if (records.length !== count) {
    throw new Error(`header promises ${count} records, file holds ${records.length}`);
  }
  const seen = new Set<string>();
  const points: MinutiaPoint[] = [];
  for (const [index, line] of records.entries()) {
    const rec = RECORD_RE.exec(line);
    if (rec === null) throw new Error(`malformed record on line ${index + 2}: ${JSON.stringify(line)}`);
    const x = Number(rec[1]);
    const y = Number(rec[2]);
    const angle = Number(rec[3]);
    if (x > 1000 || y > 1000) throw new Error(`position out of field on line ${index + 2}`);
    if (angle > 359) throw new Error(`angle out of range on line ${index + 2}`);
    const key = `${x},${y}`;
    if (seen.has(key)) throw new Error(`duplicate minutia position (${key})`);
    seen.add(key);
    points.push({ x, y, angle, kind: rec[4] as "E" | "B" });
  }
  return points;
}
