// Transport-agnostic console core: clock sync against the service, the
// fixed-rate command sampler, feedback ingestion in sequence order, and the
// running lag estimate. The browser glues this to a WebSocket and pointer
// events; the tests drive the very same code over a TCP transport with a
// scripted cursor.

import {
  CommandMessage,
  ConfigMessage,
  DelayProfileDoc,
  FeedbackFrame,
  HelloMessage,
  parseServerMessage,
} from "./protocol.js";
import { TimedSample, estimateLag } from "./lag.js";

export interface Transport {
  send(text: string): void;
  onMessage(handler: (text: string) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export interface ConsoleState {
  connected: boolean;
  hello: HelloMessage | null;
  latestFrame: FeedbackFrame | null;
  frames: number;
  staleFramesDropped: number;
  cursor: [number, number];
  cursorTrace: TimedSample[];
  compensation: boolean;
  lagMs: number | null;
  lastError: string | null;
}

/** Provides the cursor position (robot-frame hand target) at a server time. */
export type CursorFn = (tServer: number) => [number, number];

const TRACE_WINDOW_S = 12;
const LAG_REFRESH_S = 0.5;

export class ConsoleCore {
  readonly state: ConsoleState = {
    connected: true,
    hello: null,
    latestFrame: null,
    frames: 0,
    staleFramesDropped: 0,
    cursor: [0, 0],
    cursorTrace: [],
    compensation: true,
    lagMs: null,
    lastError: null,
  };

  sentLog: TimedSample[] = [];
  recvLog: { t: number; values: number[]; mode: string }[] = [];

  private transport: Transport;
  private seq = 0;
  private clockOffset = 0; // serverTime - localSeconds
  private samplerHandle: ReturnType<typeof setTimeout> | null = null;
  private lagHandle: ReturnType<typeof setInterval> | null = null;
  private lastSeq = -1;
  private listeners: (() => void)[] = [];
  private helloListeners: ((hello: HelloMessage) => void)[] = [];

  constructor(transport: Transport, private nowSeconds: () => number) {
    this.transport = transport;
    transport.onMessage((text) => this.handleMessage(text));
    transport.onClose(() => {
      this.state.connected = false;
      this.stop();
      this.notify();
    });
  }

  onUpdate(fn: () => void): void {
    this.listeners.push(fn);
  }

  onHello(fn: (hello: HelloMessage) => void): void {
    this.helloListeners.push(fn);
  }

  /** Server-clock now; meaningful once the hello arrived. */
  serverNow(): number {
    return this.nowSeconds() + this.clockOffset;
  }

  private handleMessage(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) return;
    if (msg.type === "hello") {
      // adopt the server clock (negligible local transit assumed)
      this.clockOffset = msg.t - this.nowSeconds();
      this.state.hello = msg;
      this.state.compensation = msg.compensation;
      for (const fn of this.helloListeners) fn(msg);
    } else if (msg.type === "feedback") {
      // render strictly in sequence order: the jitter buffer already
      // ordered them, so anything stale is dropped, never re-drawn
      if (msg.seq <= this.lastSeq) {
        this.state.staleFramesDropped += 1;
        return;
      }
      this.lastSeq = msg.seq;
      this.state.latestFrame = msg;
      this.state.frames += 1;
      const names = this.state.hello?.channels ?? [];
      this.recvLog.push({
        t: this.serverNow(),
        values: names.map((n) => msg.ref[n] ?? 0),
        mode: msg.mode,
      });
      this.trimLogs();
    } else {
      this.state.lastError = msg.message;
    }
    this.notify();
  }

  /** Start the fixed-rate command sampler; cursorFn is polled per sample. */
  start(cursorFn: CursorFn): void {
    const hello = this.state.hello;
    if (hello === null) throw new Error("start() before hello");
    const period = 1000 / hello.command_rate_hz;
    let nextDue = this.nowSeconds() * 1000;
    const tick = () => {
      const t = this.serverNow();
      const [x, y] = cursorFn(t);
      this.state.cursor = [x, y];
      this.sendCommand(t, [x, y]);
      // drift-corrected schedule: one message per rate period, no coalescing
      nextDue += period;
      const wait = Math.max(0, nextDue - this.nowSeconds() * 1000);
      this.samplerHandle = setTimeout(tick, wait);
    };
    this.samplerHandle = setTimeout(tick, 0);
    this.lagHandle = setInterval(() => this.refreshLag(), LAG_REFRESH_S * 1000);
  }

  stop(): void {
    if (this.samplerHandle !== null) clearTimeout(this.samplerHandle);
    if (this.lagHandle !== null) clearInterval(this.lagHandle);
    this.samplerHandle = null;
    this.lagHandle = null;
  }

  private sendCommand(t: number, values: [number, number]): void {
    const hello = this.state.hello;
    if (hello === null) return;
    const channels: Record<string, number> = {};
    hello.channels.forEach((name, i) => {
      channels[name] = values[Math.min(i, values.length - 1)];
    });
    const msg: CommandMessage = { t, seq: this.seq++, channels };
    this.transport.send(JSON.stringify(msg));
    this.sentLog.push({ t, values: hello.channels.map((n) => channels[n]) });
    this.state.cursorTrace.push({ t, values: [...values] });
    this.trimLogs();
  }

  setCompensation(enabled: boolean): void {
    this.state.compensation = enabled;
    const msg: ConfigMessage = { type: "config", compensation: enabled };
    this.transport.send(JSON.stringify(msg));
  }

  setProfile(profile: DelayProfileDoc): void {
    const msg: ConfigMessage = { type: "config", profile };
    this.transport.send(JSON.stringify(msg));
  }

  refreshLag(): void {
    const est = estimateLag(this.sentLog, this.recvLog, 4.0, 0.02);
    this.state.lagMs = est === null ? null : Math.round(est.lagS * 1000);
    this.notify();
  }

  private trimLogs(): void {
    const cut = this.serverNow() - TRACE_WINDOW_S;
    while (this.sentLog.length && this.sentLog[0].t < cut) this.sentLog.shift();
    while (this.recvLog.length && this.recvLog[0].t < cut) this.recvLog.shift();
    while (this.state.cursorTrace.length && this.state.cursorTrace[0].t < cut) {
      this.state.cursorTrace.shift();
    }
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }
}

export function greeting(): string {
  return JSON.stringify({ type: "hi" });
}
