// Browser wiring: WebSocket transport, pointer events as the cursor source,
// control buttons, and the animation-frame render loop. Host and port come
// from query parameters (?host=...&port=...).

import { ConsoleCore, Transport } from "./client.js";
import { roundTripProfile } from "./protocol.js";
import { Viewport, canvasToWorld, render, statusLine } from "./render.js";

class WsTransport implements Transport {
  private ws: WebSocket;
  private messageHandler: ((text: string) => void) | null = null;
  private closeHandler: (() => void) | null = null;

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (ev) => this.messageHandler?.(String(ev.data));
    this.ws.onclose = () => this.closeHandler?.();
    this.ws.onerror = () => this.closeHandler?.();
  }

  send(text: string): void {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(text);
  }

  onMessage(handler: (text: string) => void): void {
    this.messageHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.ws.close();
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

function main(): void {
  const params = new URLSearchParams(location.search);
  const host = params.get("host") ?? location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "8791";

  const canvas = el<HTMLCanvasElement>("scene");
  const status = el<HTMLDivElement>("status");
  const banner = el<HTMLDivElement>("banner");
  const toggle = el<HTMLButtonElement>("toggle");
  const profileSelect = el<HTMLSelectElement>("profile");
  const download = el<HTMLButtonElement>("download");

  const viewport: Viewport = { scale: 420, originX: 140, originY: 520 };

  const ws = new WsTransport(`ws://${host}:${port}/`);
  const core = new ConsoleCore(ws, () => performance.now() / 1000);

  // cursor follows the pointer; starts at the chain tip once hello arrives
  let cursor: [number, number] = [0, 0];
  let started = false;

  core.onHello((hello) => {
    if (!started) {
      const { lengths, base, q0 } = hello.chain;
      let angle = 0;
      let [x, y] = base;
      for (let i = 0; i < lengths.length; i++) {
        angle += q0[i];
        x += lengths[i] * Math.cos(angle);
        y += lengths[i] * Math.sin(angle);
      }
      cursor = [x, y];
      core.start(() => cursor);
      started = true;
    }
    toggle.textContent = core.state.compensation
      ? "compensation: ON"
      : "compensation: OFF";
    const rt = hello.profile.tau_f_ms + hello.profile.tau_b_ms;
    for (const option of Array.from(profileSelect.options)) {
      option.selected = Number(option.value) === rt;
    }
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (ev.buttons === 0 && ev.pointerType === "mouse" && !dragging) return;
    const rect = canvas.getBoundingClientRect();
    cursor = canvasToWorld(viewport, ev.clientX - rect.left, ev.clientY - rect.top);
  });
  let dragging = false;
  canvas.addEventListener("pointerdown", () => (dragging = true));
  canvas.addEventListener("pointerup", () => (dragging = false));

  toggle.addEventListener("click", () => {
    core.setCompensation(!core.state.compensation);
    toggle.textContent = core.state.compensation
      ? "compensation: ON"
      : "compensation: OFF";
  });

  profileSelect.addEventListener("change", () => {
    core.setProfile(roundTripProfile(Number(profileSelect.value)));
  });

  download.addEventListener("click", () => {
    const log = {
      sent: core.sentLog,
      received: core.recvLog,
      hello: core.state.hello,
    };
    const blob = new Blob([JSON.stringify(log)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session-log.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  const frame = () => {
    render(canvas, core.state, viewport);
    status.textContent = statusLine(core.state);
    banner.style.display = core.state.connected ? "none" : "block";
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

window.addEventListener("load", main);
