import { ModelSpec, NonFiniteLoss, DatasetStageMismatch } from './types.js';
import { Sequence } from './data.js';
import { Rng } from './rng.js';

/**
 * Causal n-gram language model: each position is predicted from the
 * embeddings of the previous `contextWindow` tokens through one tanh layer.
 *
 * Small by construction, but trained with the same loop shape as a large
 * model: mini-batches, gradient accumulation, AdamW, checkpoints.
 */
export class NgramLm {
  readonly spec: ModelSpec;
  /** Flat parameter vector; layout is fixed so serialization is stable. */
  readonly params: Float32Array;

  // Offsets into the flat parameter vector.
  private readonly offEmb: number;
  private readonly offW1: number;
  private readonly offB1: number;
  private readonly offW2: number;
  private readonly offB2: number;

  constructor(spec: ModelSpec, params?: Float32Array) {
    this.spec = spec;
    const { vocabSize: v, contextWindow: k, embedDim: e, hiddenDim: h } = spec;
    this.offEmb = 0;
    this.offW1 = this.offEmb + v * e;
    this.offB1 = this.offW1 + k * e * h;
    this.offW2 = this.offB1 + h;
    this.offB2 = this.offW2 + h * v;
    const total = this.offB2 + v;
    if (params !== undefined) {
      if (params.length !== total) {
        throw new Error(`parameter vector length ${params.length}, expected ${total}`);
      }
      this.params = params;
    } else {
      this.params = new Float32Array(total);
    }
  }

  paramCount(): number {
    return this.params.length;
  }

  /** Fresh model with small gaussian weights and zero biases. */
  static init(spec: ModelSpec, rng: Rng): NgramLm {
    const model = new NgramLm(spec);
    const p = model.params;
    const scale = 0.08;
    for (let i = 0; i < model.offB1; i++) {
      p[i] = rng.gaussian() * scale;
    }
    for (let i = model.offW2; i < model.offB2; i++) {
      p[i] = rng.gaussian() * scale;
    }
    return model;
  }

  /**
   * Accumulate raw gradients for a micro-batch into `grads` and return the
   * summed loss plus the number of positions counted.
   *
   * When `maskTokenId` is given, positions whose target is that id are
   * excluded from both the loss and the gradients.
   */
  accumulate(
    sequences: Sequence[],
    maskTokenId: number | null,
    grads: Float32Array | null,
  ): { lossSum: number; count: number } {
    const { vocabSize: v, contextWindow: k, embedDim: e, hiddenDim: h } = this.spec;
    const p = this.params;
    const inDim = k * e;
    const x = new Float64Array(inDim);
    const hidden = new Float64Array(h);
    const logits = new Float64Array(v);
    const probs = new Float64Array(v);
    const dPre = new Float64Array(h);
    let lossSum = 0;
    let count = 0;

    for (const seq of sequences) {
      const ids = seq.ids;
      for (let t = 0; t < ids.length; t++) {
        const target = ids[t];
        if (target < 0 || target >= v) {
          throw new DatasetStageMismatch(`token id ${target} outside vocabulary of size ${v}`);
        }
        if (maskTokenId !== null && target === maskTokenId) continue;

        // Gather context embeddings; positions before the first token read
        // the id-0 embedding so every window has a fixed shape.
        for (let j = 0; j < k; j++) {
          const pos = t - k + j;
          const ctxId = pos >= 0 ? ids[pos] : 0;
          const src = this.offEmb + ctxId * e;
          for (let d = 0; d < e; d++) x[j * e + d] = p[src + d];
        }

        for (let j = 0; j < h; j++) {
          let acc = p[this.offB1 + j];
          const col = this.offW1 + j;
          for (let i = 0; i < inDim; i++) acc += x[i] * p[col + i * h];
          hidden[j] = Math.tanh(acc);
        }

        let maxLogit = -Infinity;
        for (let o = 0; o < v; o++) {
          let acc = p[this.offB2 + o];
          const col = this.offW2 + o;
          for (let j = 0; j < h; j++) acc += hidden[j] * p[col + j * v];
          logits[o] = acc;
          if (acc > maxLogit) maxLogit = acc;
        }
        let expSum = 0;
        for (let o = 0; o < v; o++) {
          const ex = Math.exp(logits[o] - maxLogit);
          probs[o] = ex;
          expSum += ex;
        }
        const loss = Math.log(expSum) - (logits[target] - maxLogit);
        if (!Number.isFinite(loss)) {
          throw new NonFiniteLoss(`loss became non-finite at position ${t}`);
        }
        lossSum += loss;
        count += 1;

        if (grads === null) continue;

        // probs becomes dLoss/dLogits in place.
        for (let o = 0; o < v; o++) probs[o] /= expSum;
        probs[target] -= 1;

        for (let o = 0; o < v; o++) {
          const d = probs[o];
          grads[this.offB2 + o] += d;
        }
        for (let j = 0; j < h; j++) {
          let dh = 0;
          const col = this.offW2 + j * v;
          const hj = hidden[j];
          for (let o = 0; o < v; o++) {
            const d = probs[o];
            grads[col + o] += hj * d;
            dh += p[col + o] * d;
          }
          dPre[j] = dh * (1 - hj * hj);
        }
        for (let j = 0; j < h; j++) {
          grads[this.offB1 + j] += dPre[j];
        }
        for (let i = 0; i < inDim; i++) {
          let dx = 0;
          const row = this.offW1 + i * h;
          const xi = x[i];
          for (let j = 0; j < h; j++) {
            const d = dPre[j];
            grads[row + j] += xi * d;
            dx += p[row + j] * d;
          }
          // Route the input gradient back to the context token's embedding.
          const j0 = Math.floor(i / e);
          const pos = t - k + j0;
          const ctxId = pos >= 0 ? ids[pos] : 0;
          grads[this.offEmb + ctxId * e + (i - j0 * e)] += dx;
        }
      }
    }
    return { lossSum, count };
  }

  /** Mean loss over the counted positions of `sequences`, without gradients. */
  meanLoss(sequences: Sequence[], maskTokenId: number | null): number {
    const { lossSum, count } = this.accumulate(sequences, maskTokenId, null);
    if (count === 0) return 0;
    return lossSum / count;
  }
}
