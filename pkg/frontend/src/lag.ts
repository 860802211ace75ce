// Cursor-to-feedback lag estimation: the shift that best aligns the stream
// of references we got back onto the stream of commands we sent.

export interface TimedSample {
  t: number;
  values: number[];
}

function interp(samples: TimedSample[], t: number, dim: number): number | null {
  if (samples.length < 2) return null;
  if (t < samples[0].t || t > samples[samples.length - 1].t) return null;
  // binary search for the bracketing pair
  let lo = 0;
  let hi = samples.length - 1;
  while (hi - lo > 1) {
    const mid = (lo + hi) >> 1;
    if (samples[mid].t <= t) lo = mid;
    else hi = mid;
  }
  const a = samples[lo];
  const b = samples[hi];
  const w = b.t === a.t ? 0 : (t - a.t) / (b.t - a.t);
  return a.values[dim] + w * (b.values[dim] - a.values[dim]);
}

export interface LagEstimate {
  lagS: number;
  cost: number;
}

/**
 * Best shift (seconds) such that received(t) matches sent(t - shift).
 * Scans a grid of candidate lags; returns null when the overlap is too thin.
 */
export function estimateLag(
  sent: TimedSample[],
  received: TimedSample[],
  maxLagS = 3.0,
  stepS = 0.01,
): LagEstimate | null {
  if (sent.length < 10 || received.length < 10) return null;
  const dims = Math.min(sent[0].values.length, received[0].values.length);
  let best: LagEstimate | null = null;
  for (let lag = 0; lag <= maxLagS + 1e-9; lag += stepS) {
    let cost = 0;
    let count = 0;
    for (const sample of received) {
      for (let d = 0; d < dims; d++) {
        const ref = interp(sent, sample.t - lag, d);
        if (ref === null) continue;
        const diff = sample.values[d] - ref;
        cost += diff * diff;
        count += 1;
      }
    }
    if (count < 10) continue;
    cost /= count;
    if (best === null || cost < best.cost) {
      best = { lagS: lag, cost };
    }
  }
  return best;
}
