// Numeric formatting shared with the CLI: shortest round-trip decimal with a
// trailing ".0" on integral floats, so interval endpoints compare
// string-exactly between UI and `norma interpret` output.

export function formatNumber(x: number | null | undefined): string {
  if (x === null || x === undefined) {
    return "---";
  }
  if (Number.isInteger(x) && Number.isFinite(x) && Math.abs(x) < 1e16) {
    return `${x}.0`;
  }
  return String(x);
}

export function formatDelta(x: number): string {
  const sign = x > 0 ? "+" : "";
  return `${sign}${formatNumber(x)}`;
}

export function formatFlag(flag: boolean | null | undefined): string {
  if (flag === null || flag === undefined) {
    return "---";
  }
  return flag ? "abnormal" : "normal";
}
