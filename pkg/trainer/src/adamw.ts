/**
 * AdamW optimizer over a flat parameter vector.
 *
 * Weight decay is decoupled: it is applied directly to the parameters and
 * never enters the moment estimates.
 */
export class AdamW {
  private readonly m: Float64Array;
  private readonly v: Float64Array;
  private step = 0;

  constructor(
    paramCount: number,
    private readonly learningRate: number,
    private readonly weightDecay: number,
    private readonly beta1 = 0.9,
    private readonly beta2 = 0.999,
    private readonly eps = 1e-8,
  ) {
    this.m = new Float64Array(paramCount);
    this.v = new Float64Array(paramCount);
  }

  /** Apply one update in place; `grads` is already the mean gradient. */
  update(params: Float32Array, grads: Float32Array): void {
    this.step += 1;
    const correction1 = 1 - Math.pow(this.beta1, this.step);
    const correction2 = 1 - Math.pow(this.beta2, this.step);
    const lr = this.learningRate;
    const wd = this.weightDecay;
    for (let i = 0; i < params.length; i++) {
      const g = grads[i];
      this.m[i] = this.beta1 * this.m[i] + (1 - this.beta1) * g;
      this.v[i] = this.beta2 * this.v[i] + (1 - this.beta2) * g * g;
      const mHat = this.m[i] / correction1;
      const vHat = this.v[i] / correction2;
      params[i] -= lr * (mHat / (Math.sqrt(vHat) + this.eps) + wd * params[i]);
    }
  }
}
