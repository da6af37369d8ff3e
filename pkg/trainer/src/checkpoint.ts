import * as fs from 'node:fs';
import * as path from 'node:path';
import * as crypto from 'node:crypto';
import { ModelSpec, CheckpointInfo, MissingCheckpoint } from './types.js';
import { NgramLm } from './model.js';

/** Fixed little-endian float32 encoding so hashes are platform independent. */
export function serializeParams(params: Float32Array): Buffer {
  const buf = Buffer.allocUnsafe(params.length * 4);
  for (let i = 0; i < params.length; i++) {
    buf.writeFloatLE(params[i], i * 4);
  }
  return buf;
}

export function deserializeParams(buf: Buffer): Float32Array {
  if (buf.length % 4 !== 0) {
    throw new MissingCheckpoint(`weights payload of ${buf.length} bytes is not float32 aligned`);
  }
  const out = new Float32Array(buf.length / 4);
  for (let i = 0; i < out.length; i++) {
    out[i] = buf.readFloatLE(i * 4);
  }
  return out;
}

export function hashWeights(params: Float32Array): string {
  return crypto.createHash('sha256').update(serializeParams(params)).digest('hex');
}

interface CheckpointState {
  step: number;
  epoch: number;
  slot: number;
  evalLoss: number;
}

/**
 * Save a checkpoint atomically: everything is written into a temp directory
 * next to the target, then renamed into place, so a crash mid-write never
 * leaves a half-readable checkpoint.
 */
export function saveCheckpoint(dir: string, model: NgramLm, state: CheckpointState): CheckpointInfo {
  const parent = path.dirname(dir);
  fs.mkdirSync(parent, { recursive: true });
  const tmp = `${dir}.tmp-${process.pid}`;
  fs.rmSync(tmp, { recursive: true, force: true });
  fs.mkdirSync(tmp, { recursive: true });

  const payload = serializeParams(model.params);
  const weightsHash = crypto.createHash('sha256').update(payload).digest('hex');
  fs.writeFileSync(path.join(tmp, 'weights.bin'), payload);
  fs.writeFileSync(path.join(tmp, 'model.json'), JSON.stringify(model.spec, null, 2) + '\n');
  fs.writeFileSync(
    path.join(tmp, 'training_state.json'),
    JSON.stringify({ ...state, weights_hash: weightsHash }, null, 2) + '\n',
  );

  fs.rmSync(dir, { recursive: true, force: true });
  fs.renameSync(tmp, dir);
  return { path: dir, ...state, weightsHash };
}

export interface LoadedCheckpoint {
  spec: ModelSpec;
  params: Float32Array;
  weightsHash: string;
}

export function loadCheckpoint(dir: string): LoadedCheckpoint {
  const modelPath = path.join(dir, 'model.json');
  const weightsPath = path.join(dir, 'weights.bin');
  if (!fs.existsSync(modelPath) || !fs.existsSync(weightsPath)) {
    throw new MissingCheckpoint(`no checkpoint at ${dir}`);
  }
  const spec = JSON.parse(fs.readFileSync(modelPath, 'utf-8')) as ModelSpec;
  const payload = fs.readFileSync(weightsPath);
  const params = deserializeParams(payload);
  const expected =
    spec.vocabSize * spec.embedDim +
    spec.contextWindow * spec.embedDim * spec.hiddenDim +
    spec.hiddenDim +
    spec.hiddenDim * spec.vocabSize +
    spec.vocabSize;
  if (params.length !== expected) {
    throw new MissingCheckpoint(
      `checkpoint at ${dir} has ${params.length} parameters, expected ${expected}`,
    );
  }
  const weightsHash = crypto.createHash('sha256').update(payload).digest('hex');
  return { spec, params, weightsHash };
}

/** Atomic single-file JSON write, used for run results. */
export function writeJsonAtomic(filePath: string, value: unknown): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp-${process.pid}`;
  fs.writeFileSync(tmp, JSON.stringify(value, null, 2) + '\n');
  fs.renameSync(tmp, filePath);
}
