import * as fs from 'node:fs';
import { TrainConfig, DatasetStageMismatch, InvalidTrainConfig } from './types.js';

/** One training sequence: token ids, always exactly contextLen long. */
export interface Sequence {
  ids: number[];
}

function readJsonl(path: string): unknown[] {
  const text = fs.readFileSync(path, 'utf-8');
  const rows: unknown[] = [];
  for (const line of text.split('\n')) {
    const trimmed = line.trim();
    if (trimmed.length === 0) continue;
    rows.push(JSON.parse(trimmed));
  }
  return rows;
}

/**
 * Load packed token blocks for the document pre-training stage.
 *
 * Each JSONL row carries an `ids` array; every block must already be exactly
 * `contextLen` tokens, because packing produced fixed-size blocks upstream.
 */
export function loadBlocks(path: string, contextLen: number): Sequence[] {
  const rows = readJsonl(path);
  const sequences: Sequence[] = [];
  rows.forEach((row, n) => {
    const record = row as { ids?: unknown };
    if (!Array.isArray(record.ids)) {
      throw new DatasetStageMismatch(`block row ${n} in ${path} has no ids array`);
    }
    const ids = record.ids.map((v) => {
      if (typeof v !== 'number' || !Number.isInteger(v) || v < 0) {
        throw new DatasetStageMismatch(`block row ${n} in ${path} has a non-token id`);
      }
      return v;
    });
    if (ids.length !== contextLen) {
      throw new DatasetStageMismatch(
        `block row ${n} in ${path} has length ${ids.length}, expected ${contextLen}`,
      );
    }
    sequences.push({ ids });
  });
  if (sequences.length === 0) {
    throw new DatasetStageMismatch(`no blocks found in ${path}`);
  }
  return sequences;
}

/**
 * Fit a tokenized instruction to exactly `contextLen` ids: truncate when too
 * long, right-pad with `padTokenId` when too short.
 */
export function fitToContext(ids: number[], contextLen: number, padTokenId: number): number[] {
  if (ids.length >= contextLen) {
    return ids.slice(0, contextLen);
  }
  const padded = ids.slice();
  while (padded.length < contextLen) {
    padded.push(padTokenId);
  }
  return padded;
}

/**
 * Load rendered instruction rows for the fine-tuning stage.
 *
 * Rows must carry pre-tokenized `ids`; each sequence is fitted to exactly
 * `contextLen` so every batch has a uniform shape.
 */
export function loadRenderedInstructions(path: string, config: TrainConfig): Sequence[] {
  if (config.pad_token_policy !== 'pad_to_context') {
    throw new DatasetStageMismatch(
      'rendered instructions require the pad_to_context padding policy',
    );
  }
  if (typeof config.pad_token_id !== 'number') {
    throw new InvalidTrainConfig('pad_to_context requires pad_token_id');
  }
  const padTokenId = config.pad_token_id;
  const rows = readJsonl(path);
  const sequences: Sequence[] = [];
  rows.forEach((row, n) => {
    const record = row as { ids?: unknown };
    if (!Array.isArray(record.ids)) {
      throw new DatasetStageMismatch(
        `rendered row ${n} in ${path} has no ids array; tokenize before training`,
      );
    }
    const ids = record.ids.map((v) => {
      if (typeof v !== 'number' || !Number.isInteger(v) || v < 0) {
        throw new DatasetStageMismatch(`rendered row ${n} in ${path} has a non-token id`);
      }
      return v;
    });
    sequences.push({ ids: fitToContext(ids, config.context_len, padTokenId) });
  });
  if (sequences.length === 0) {
    throw new DatasetStageMismatch(`no rendered instructions found in ${path}`);
  }
  return sequences;
}

/** Load the dataset appropriate for the config's stage. */
export function loadDataset(path: string, config: TrainConfig): Sequence[] {
  if (config.stage === 'docs_pretrain') {
    return loadBlocks(path, config.context_len);
  }
  return loadRenderedInstructions(path, config);
}

/** Number of optimizer steps per epoch: micro-batches grouped by grad_accum. */
export function stepsPerEpoch(datasetSize: number, batchSize: number, gradAccum: number): number {
  const microBatches = Math.ceil(datasetSize / batchSize);
  return Math.ceil(microBatches / gradAccum);
}

/** Split a shuffled index order into micro-batches of at most `batchSize`. */
export function microBatches(order: number[], batchSize: number): number[][] {
  const batches: number[][] = [];
  for (let start = 0; start < order.length; start += batchSize) {
    batches.push(order.slice(start, start + batchSize));
  }
  return batches;
}
