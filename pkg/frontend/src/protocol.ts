// Wire schema shared with the teleoperation service. One JSON message per
// line (TCP) or per frame (WebSocket); the client speaks first.

export interface HelloMessage {
  type: "hello";
  t: number;
  channels: string[];
  chain: { lengths: number[]; base: [number, number]; q0: number[] };
  profile: DelayProfileDoc;
  compensation: boolean;
  command_rate_hz: number;
  feedback_rate_hz: number;
}

export interface DelayProfileDoc {
  tau_f_ms: number;
  sigma_ms: number;
  tau_b_ms: number;
  jitter_buffer_ms: number;
  loss: number;
}

export interface FeedbackFrame {
  type: "feedback";
  t: number;
  seq: number;
  mode: string;
  q: number[];
  points: [number, number][];
  tau_f_ms: number;
  task: string | null;
  ref: Record<string, number>;
  provenance: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = HelloMessage | FeedbackFrame | ErrorMessage;

export interface CommandMessage {
  t: number;
  seq: number;
  channels: Record<string, number>;
}

export interface ConfigMessage {
  type: "config";
  compensation?: boolean;
  profile?: DelayProfileDoc;
}

export function parseServerMessage(text: string): ServerMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  const msg = doc as { type?: string };
  if (msg.type === "hello" || msg.type === "feedback" || msg.type === "error") {
    return msg as ServerMessage;
  }
  return null;
}

export function roundTripProfile(roundTripMs: number): DelayProfileDoc {
  const half = roundTripMs / 2;
  return {
    tau_f_ms: half,
    sigma_ms: (2 / 15) * half,
    tau_b_ms: half,
    jitter_buffer_ms: 0,
    loss: 0,
  };
}
