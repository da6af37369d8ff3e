export type { StageName, TrainConfig, ModelSpec, CheckpointInfo, TrainRunResult } from './types.js';
export {
  StageOrderViolation,
  DatasetStageMismatch,
  NonFiniteLoss,
  InvalidTrainConfig,
  MissingCheckpoint,
  validateConfig,
  loadConfig,
} from './types.js';
export type { Sequence } from './data.js';
export { loadBlocks, loadRenderedInstructions, loadDataset, fitToContext, stepsPerEpoch, microBatches } from './data.js';
export { NgramLm } from './model.js';
export { AdamW } from './adamw.js';
export { Rng } from './rng.js';
export {
  serializeParams,
  deserializeParams,
  hashWeights,
  saveCheckpoint,
  loadCheckpoint,
  writeJsonAtomic,
} from './checkpoint.js';
export type { RunStageOptions, TwoStageOptions, TwoStageResult } from './train.js';
export { checkpointStep, runStage, runTwoStage } from './train.js';
