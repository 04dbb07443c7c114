/** Display-only formatting helpers. */

export function simClock(simTimeS: number): string {
  const day = Math.floor(simTimeS / 86400);
  const h = Math.floor((simTimeS % 86400) / 3600);
  const m = Math.floor((simTimeS % 3600) / 60);
  const s = Math.floor(simTimeS % 60);
  const two = (n: number) => n.toString().padStart(2, "0");
  return `day ${day + 1} ${two(h)}:${two(m)}:${two(s)}`;
}

export function wh(value: number): string {
  return value >= 10_000 ? `${(value / 1000).toFixed(1)} kWh` : `${value.toFixed(0)} Wh`;
}

export function countdown(expiresS: number | null, nowS: number): string {
  if (expiresS === null) return "";
  const left = expiresS - nowS;
  return left > 0 ? `${left}s left` : "expiring";
}
