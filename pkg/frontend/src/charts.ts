/** Dependency-free canvas renderers: multi-line series and a simple scatter
 * "map". Pure presentation; values are plotted as received. */

export interface Line {
  label: string;
  points: Array<{ x: number; y: number }>;
  color: string;
  dashed?: boolean;
}

const AXIS = "#8b949e";
const GRID = "#21262d";

export const PALETTE = [
  "#58a6ff", "#3fb950", "#f0ad4e", "#bc8cff", "#f85149",
  "#2dd4bf", "#e3b341", "#ff7b72", "#79c0ff", "#56d364",
];

export function drawLines(canvas: HTMLCanvasElement, lines: Line[],
                          xLabel: string): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const pad = { left: 46, right: 8, top: 8, bottom: 22 };
  const all = lines.flatMap((l) => l.points);
  if (all.length === 0) {
    ctx.fillStyle = AXIS;
    ctx.font = "12px sans-serif";
    ctx.fillText("no data yet", w / 2 - 30, h / 2);
    return;
  }
  const xMin = Math.min(...all.map((p) => p.x));
  const xMax = Math.max(...all.map((p) => p.x));
  const yMax = Math.max(...all.map((p) => p.y), 1e-9);
  const sx = (x: number) =>
    pad.left + ((x - xMin) / Math.max(xMax - xMin, 1e-9)) * (w - pad.left - pad.right);
  const sy = (y: number) => h - pad.bottom - (y / yMax) * (h - pad.top - pad.bottom);

  ctx.strokeStyle = GRID;
  ctx.fillStyle = AXIS;
  ctx.font = "10px sans-serif";
  for (let g = 0; g <= 4; g++) {
    const y = pad.top + (g / 4) * (h - pad.top - pad.bottom);
    ctx.beginPath();
    ctx.moveTo(pad.left, y);
    ctx.lineTo(w - pad.right, y);
    ctx.stroke();
    const value = yMax * (1 - g / 4);
    ctx.fillText(value >= 100 ? value.toFixed(0) : value.toFixed(1), 4, y + 3);
  }
  ctx.fillText(xLabel, w - pad.right - 60, h - 6);

  for (const line of lines) {
    if (line.points.length === 0) continue;
    ctx.strokeStyle = line.color;
    ctx.lineWidth = 1.4;
    ctx.setLineDash(line.dashed ? [5, 4] : []);
    ctx.beginPath();
    line.points.forEach((p, i) => {
      if (i === 0) ctx.moveTo(sx(p.x), sy(p.y));
      else ctx.lineTo(sx(p.x), sy(p.y));
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

export interface Marker {
  label: string;
  lat: number;
  lon: number;
  kind: "parking" | "tourist";
  note: string;
}

export function drawMap(canvas: HTMLCanvasElement, markers: Marker[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  if (markers.length === 0) return;
  const pad = 30;
  const lats = markers.map((m) => m.lat);
  const lons = markers.map((m) => m.lon);
  const latMin = Math.min(...lats), latMax = Math.max(...lats);
  const lonMin = Math.min(...lons), lonMax = Math.max(...lons);
  const sx = (lon: number) =>
    pad + ((lon - lonMin) / Math.max(lonMax - lonMin, 1e-9)) * (w - 2 * pad);
  const sy = (lat: number) =>
    h - pad - ((lat - latMin) / Math.max(latMax - latMin, 1e-9)) * (h - 2 * pad);

  ctx.font = "10px sans-serif";
  for (const m of markers) {
    const x = sx(m.lon);
    const y = sy(m.lat);
    ctx.fillStyle = m.kind === "parking" ? "#58a6ff" : "#3fb950";
    if (m.kind === "parking") {
      ctx.fillRect(x - 5, y - 5, 10, 10);
    } else {
      ctx.beginPath();
      ctx.arc(x, y, 6, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.fillStyle = "#c9d1d9";
    ctx.fillText(`${m.label} (${m.note})`, x + 8, y + 3);
  }
}
