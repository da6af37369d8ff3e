import { readFileSync } from 'node:fs';

export type StageName = 'docs_pretrain' | 'instruction_finetune';

/** Training configuration file, produced by the dataset toolkit. */
export interface TrainConfig {
  stage: StageName;
  context_len: number;
  epochs: number;
  checkpoints_per_epoch: number;
  optimizer: string;
  learning_rate: number;
  weight_decay: number;
  batch_size: number;
  grad_accum: number;
  pad_token_policy: 'none' | 'pad_to_context';
  select_best_by: string;
  loss_masking: 'full_sequence' | 'answer_only';
  dataset_path?: string;
  seed?: number;
  pad_token_id?: number;
  init_from?: string;
}

export interface ModelSpec {
  vocabSize: number;
  contextWindow: number; // tokens of left context fed to the head
  embedDim: number;
  hiddenDim: number;
}

export interface CheckpointInfo {
  path: string;
  step: number;
  epoch: number;
  slot: number; // 1..checkpoints_per_epoch within the epoch
  evalLoss: number;
  weightsHash: string;
}

export interface TrainRunResult {
  stage: StageName;
  stepsRun: number;
  lossCurve: Array<[number, number]>;
  checkpoints: CheckpointInfo[];
  selectedCheckpoint: CheckpointInfo;
  finalEvalLoss: number;
  initWeightsHash: string;
  seed: number;
}

export class StageOrderViolation extends Error {}
export class DatasetStageMismatch extends Error {}
export class NonFiniteLoss extends Error {}
export class InvalidTrainConfig extends Error {}
export class MissingCheckpoint extends Error {}

const STAGES: StageName[] = ['docs_pretrain', 'instruction_finetune'];

export function validateConfig(config: TrainConfig): void {
  if (!STAGES.includes(config.stage)) {
    throw new InvalidTrainConfig(`unknown stage ${String(config.stage)}`);
  }
  for (const field of [
    'context_len',
    'epochs',
    'checkpoints_per_epoch',
    'batch_size',
    'grad_accum',
  ] as const) {
    const value = config[field];
    if (!Number.isInteger(value) || value < 1) {
      throw new InvalidTrainConfig(`${field} must be an integer >= 1, got ${value}`);
    }
  }
  if (!(config.learning_rate > 0)) {
    throw new InvalidTrainConfig('learning_rate must be > 0');
  }
  if (!(config.weight_decay >= 0)) {
    throw new InvalidTrainConfig('weight_decay must be >= 0');
  }
  if (config.pad_token_policy === 'pad_to_context' && config.pad_token_id === undefined) {
    throw new InvalidTrainConfig('pad_to_context requires pad_token_id');
  }
}

export function loadConfig(path: string): TrainConfig {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new InvalidTrainConfig(`cannot read config ${path}: ${String(err)}`);
  }
  const config = raw as TrainConfig;
  validateConfig(config);
  return config;
}
