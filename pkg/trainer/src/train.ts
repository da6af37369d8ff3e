import * as path from 'node:path';
import {
  TrainConfig,
  ModelSpec,
  TrainRunResult,
  CheckpointInfo,
  StageOrderViolation,
  InvalidTrainConfig,
  MissingCheckpoint,
  validateConfig,
} from './types.js';
import { Sequence, loadDataset, stepsPerEpoch, microBatches } from './data.js';
import { NgramLm } from './model.js';
import { AdamW } from './adamw.js';
import { Rng } from './rng.js';
import { saveCheckpoint, loadCheckpoint, hashWeights, writeJsonAtomic } from './checkpoint.js';

/** Eval loss is computed on a fixed prefix of the dataset, capped here. */
const EVAL_SUBSET_CAP = 16;

/** Optimizer step (1-based, within an epoch) at which checkpoint slot k fires. */
export function checkpointStep(slot: number, perEpoch: number, checkpointsPerEpoch: number): number {
  return Math.ceil((slot * perEpoch) / checkpointsPerEpoch);
}

export interface RunStageOptions {
  /** Where checkpoints and result.json are written. */
  outDir: string;
  /** Dataset path; falls back to config.dataset_path. */
  dataPath?: string;
  /** Shape for a fresh model; ignored when initializing from a checkpoint. */
  modelSpec?: ModelSpec;
  /** Checkpoint directory to initialize from; falls back to config.init_from. */
  initFrom?: string;
}

interface PreparedModel {
  model: NgramLm;
  initWeightsHash: string;
}

function prepareModel(config: TrainConfig, options: RunStageOptions, seed: number): PreparedModel {
  const initFrom = options.initFrom ?? config.init_from;
  if (initFrom !== undefined) {
    const loaded = loadCheckpoint(initFrom);
    return {
      model: new NgramLm(loaded.spec, loaded.params),
      initWeightsHash: loaded.weightsHash,
    };
  }
  if (config.stage === 'instruction_finetune') {
    throw new StageOrderViolation(
      'instruction fine-tuning must initialize from a pre-training checkpoint',
    );
  }
  if (options.modelSpec === undefined) {
    throw new InvalidTrainConfig('a fresh run needs a model spec');
  }
  const model = NgramLm.init(options.modelSpec, new Rng(seed));
  return { model, initWeightsHash: hashWeights(model.params) };
}

function maskTokenFor(config: TrainConfig): number | null {
  if (config.loss_masking === 'answer_only' && typeof config.pad_token_id === 'number') {
    return config.pad_token_id;
  }
  return null;
}

/**
 * Train one stage and return its run record.
 *
 * The loop is mini-batch SGD with gradient accumulation: `grad_accum`
 * micro-batches of `batch_size` sequences are averaged into one AdamW step,
 * so the effective batch is their product. Checkpoints fire
 * `checkpoints_per_epoch` times per epoch at evenly spaced step indices, and
 * each records the eval loss used later for best-checkpoint selection.
 */
export function runStage(config: TrainConfig, options: RunStageOptions): TrainRunResult {
  validateConfig(config);
  const dataPath = options.dataPath ?? config.dataset_path;
  if (dataPath === undefined) {
    throw new InvalidTrainConfig('no dataset path given');
  }
  const seed = config.seed ?? 0;
  const sequences = loadDataset(dataPath, config);
  const { model, initWeightsHash } = prepareModel(config, options, seed);
  const maskTokenId = maskTokenFor(config);

  const perEpoch = stepsPerEpoch(sequences.length, config.batch_size, config.grad_accum);
  const optimizer = new AdamW(model.paramCount(), config.learning_rate, config.weight_decay);
  const grads = new Float32Array(model.paramCount());
  const evalSubset = sequences.slice(0, Math.min(EVAL_SUBSET_CAP, sequences.length));
  const shuffleRng = new Rng((seed ^ 0x5eed5eed) >>> 0);

  const lossCurve: Array<[number, number]> = [];
  const checkpoints: CheckpointInfo[] = [];
  let globalStep = 0;

  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    const order = sequences.map((_, n) => n);
    shuffleRng.shuffle(order);
    const batches = microBatches(order, config.batch_size);

    for (let step = 1; step <= perEpoch; step++) {
      grads.fill(0);
      let lossSum = 0;
      let count = 0;
      const start = (step - 1) * config.grad_accum;
      for (const batch of batches.slice(start, start + config.grad_accum)) {
        const micro: Sequence[] = batch.map((n) => sequences[n]);
        const part = model.accumulate(micro, maskTokenId, grads);
        lossSum += part.lossSum;
        count += part.count;
      }
      if (count > 0) {
        for (let i = 0; i < grads.length; i++) grads[i] /= count;
        optimizer.update(model.params, grads);
      }
      globalStep += 1;
      lossCurve.push([globalStep, count > 0 ? lossSum / count : 0]);

      const slots: number[] = [];
      for (let k = 1; k <= config.checkpoints_per_epoch; k++) {
        if (checkpointStep(k, perEpoch, config.checkpoints_per_epoch) === step) slots.push(k);
      }
      if (slots.length > 0) {
        const evalLoss = model.meanLoss(evalSubset, maskTokenId);
        for (const slot of slots) {
          const dir = path.join(options.outDir, `ckpt-e${epoch}-k${slot}`);
          checkpoints.push(saveCheckpoint(dir, model, { step: globalStep, epoch, slot, evalLoss }));
        }
      }
    }
  }

  let selected: CheckpointInfo | null = null;
  for (const info of checkpoints) {
    if (selected === null || info.evalLoss < selected.evalLoss) selected = info;
  }
  if (selected === null) {
    throw new MissingCheckpoint('training produced no checkpoint');
  }

  const result: TrainRunResult = {
    stage: config.stage,
    stepsRun: globalStep,
    lossCurve,
    checkpoints,
    selectedCheckpoint: selected,
    finalEvalLoss: model.meanLoss(evalSubset, maskTokenId),
    initWeightsHash,
    seed,
  };
  writeJsonAtomic(path.join(options.outDir, 'result.json'), result);
  return result;
}

export interface TwoStageOptions {
  outDir: string;
  stage1Data?: string;
  stage2Data?: string;
  modelSpec: ModelSpec;
}

export interface TwoStageResult {
  stage1: TrainRunResult;
  stage2: TrainRunResult;
}

/**
 * Run document pre-training followed by instruction fine-tuning. The second
 * stage always starts from the best stage-one checkpoint by eval loss.
 */
export function runTwoStage(
  pretrainConfig: TrainConfig,
  finetuneConfig: TrainConfig,
  options: TwoStageOptions,
): TwoStageResult {
  if (pretrainConfig.stage !== 'docs_pretrain' || finetuneConfig.stage !== 'instruction_finetune') {
    throw new StageOrderViolation(
      'two-stage training is docs_pretrain first, then instruction_finetune',
    );
  }
  const stage1 = runStage(pretrainConfig, {
    outDir: path.join(options.outDir, 'stage1'),
    dataPath: options.stage1Data,
    modelSpec: options.modelSpec,
  });
  const stage2 = runStage(finetuneConfig, {
    outDir: path.join(options.outDir, 'stage2'),
    dataPath: options.stage2Data,
    initFrom: stage1.selectedCheckpoint.path,
  });
  if (stage2.initWeightsHash !== stage1.selectedCheckpoint.weightsHash) {
    throw new StageOrderViolation('fine-tuning did not start from the selected checkpoint');
  }
  return { stage1, stage2 };
}
