// Canvas drawing: operator cursor on the left, the robot chain as reported
// by the latest feedback frame on the right, badges for mode, delay and lag.

import { ConsoleState } from "./client.js";
import { FeedbackFrame, HelloMessage } from "./protocol.js";

const MODE_COLORS: Record<string, string> = {
  delayed: "#e0a030",
  recognizing: "#d0c040",
  blending: "#60b0d0",
  compensating: "#50c878",
  reverting: "#e07050",
};

export interface Viewport {
  scale: number; // pixels per meter
  originX: number; // canvas x of world 0
  originY: number; // canvas y of world 0 (y axis flipped)
}

export function worldToCanvas(v: Viewport, x: number, y: number): [number, number] {
  return [v.originX + x * v.scale, v.originY - y * v.scale];
}

export function canvasToWorld(v: Viewport, px: number, py: number): [number, number] {
  return [(px - v.originX) / v.scale, (v.originY - py) / v.scale];
}

function placeholderPoints(hello: HelloMessage): [number, number][] {
  // chain at its initial pose, reconstructed from the hello geometry
  const { lengths, base, q0 } = hello.chain;
  const points: [number, number][] = [[base[0], base[1]]];
  let angle = 0;
  let [x, y] = base;
  for (let i = 0; i < lengths.length; i++) {
    angle += q0[i];
    x += lengths[i] * Math.cos(angle);
    y += lengths[i] * Math.sin(angle);
    points.push([x, y]);
  }
  return points;
}

function drawChain(
  ctx: CanvasRenderingContext2D,
  v: Viewport,
  points: [number, number][],
  color: string,
): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 6;
  ctx.lineCap = "round";
  ctx.beginPath();
  points.forEach(([x, y], i) => {
    const [px, py] = worldToCanvas(v, x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  for (const [x, y] of points) {
    const [px, py] = worldToCanvas(v, x, y);
    ctx.fillStyle = "#222";
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
  const [tx, ty] = worldToCanvas(v, points[points.length - 1][0], points[points.length - 1][1]);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(tx, ty, 8, 0, 2 * Math.PI);
  ctx.fill();
}

function drawCursor(
  ctx: CanvasRenderingContext2D,
  v: Viewport,
  state: ConsoleState,
): void {
  ctx.strokeStyle = "#8888ff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  state.cursorTrace.forEach((s, i) => {
    const [px, py] = worldToCanvas(v, s.values[0], s.values[1]);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  const [cx, cy] = worldToCanvas(v, state.cursor[0], state.cursor[1]);
  ctx.strokeStyle = "#4040ff";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(cx - 10, cy);
  ctx.lineTo(cx + 10, cy);
  ctx.moveTo(cx, cy - 10);
  ctx.lineTo(cx, cy + 10);
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
  ctx.stroke();
}

export function render(
  canvas: HTMLCanvasElement,
  state: ConsoleState,
  viewport: Viewport,
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  // ground line under the chain base
  ctx.strokeStyle = "#ccc";
  ctx.lineWidth = 1;
  const [gx0, gy0] = worldToCanvas(viewport, -0.4, 0);
  const [gx1] = worldToCanvas(viewport, 1.2, 0);
  ctx.beginPath();
  ctx.moveTo(gx0, gy0);
  ctx.lineTo(gx1, gy0);
  ctx.stroke();

  const hello = state.hello;
  if (hello !== null) {
    const frame: FeedbackFrame | null = state.latestFrame;
    const points = frame === null ? placeholderPoints(hello) : frame.points;
    const mode = frame === null ? "delayed" : frame.mode;
    drawChain(ctx, viewport, points, MODE_COLORS[mode] ?? "#888");
  }
  drawCursor(ctx, viewport, state);
}

export function statusLine(state: ConsoleState): string {
  const frame = state.latestFrame;
  const mode = frame === null ? "waiting" : frame.mode;
  const tau = frame === null ? "-" : frame.tau_f_ms.toFixed(0);
  const task = frame?.task ?? "-";
  const lag = state.lagMs === null ? "-" : String(state.lagMs);
  return `mode ${mode} | task ${task} | forward delay ${tau} ms | cursor-to-feedback lag ${lag} ms`;
}

export { MODE_COLORS };
