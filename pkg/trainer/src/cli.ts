#!/usr/bin/env node
import { pathToFileURL } from 'node:url';
import { loadConfig, ModelSpec, InvalidTrainConfig } from './types.js';
import { loadDataset } from './data.js';
import { runStage, runTwoStage } from './train.js';

const USAGE = `usage:
  finadapt-trainer run --config FILE --data FILE --out DIR
      [--init CKPT_DIR] [--vocab N] [--context-window K] [--embed-dim E] [--hidden-dim H]
  finadapt-trainer two-stage --stage1-config FILE --stage2-config FILE
      --stage1-data FILE --stage2-data FILE --out DIR
      [--vocab N] [--context-window K] [--embed-dim E] [--hidden-dim H]
`;

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith('--') || value === undefined) {
      throw new InvalidTrainConfig(`malformed arguments near ${key}`);
    }
    flags.set(key.slice(2), value);
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new InvalidTrainConfig(`missing --${name}`);
  }
  return value;
}

function intFlag(flags: Map<string, string>, name: string, fallback: number): number {
  const raw = flags.get(name);
  if (raw === undefined) return fallback;
  const value = Number(raw);
  if (!Number.isInteger(value) || value < 1) {
    throw new InvalidTrainConfig(`--${name} must be an integer >= 1`);
  }
  return value;
}

function specFromFlags(flags: Map<string, string>, vocabSize: number): ModelSpec {
  return {
    vocabSize,
    contextWindow: intFlag(flags, 'context-window', 4),
    embedDim: intFlag(flags, 'embed-dim', 8),
    hiddenDim: intFlag(flags, 'hidden-dim', 16),
  };
}

/** Vocabulary size when not given explicitly: one past the largest id seen. */
function deriveVocab(dataPath: string, configPath: string): number {
  const config = loadConfig(configPath);
  let maxId = 0;
  for (const seq of loadDataset(dataPath, config)) {
    for (const id of seq.ids) {
      if (id > maxId) maxId = id;
    }
  }
  return maxId + 1;
}

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] === '--help' || argv[0] === '-h') {
    process.stdout.write(USAGE);
    return argv.length === 0 ? 1 : 0;
  }
  const command = argv[0];
  try {
    const flags = parseFlags(argv.slice(1));
    if (command === 'run') {
      const configPath = need(flags, 'config');
      const dataPath = need(flags, 'data');
      const outDir = need(flags, 'out');
      const config = loadConfig(configPath);
      const initFrom = flags.get('init');
      let modelSpec: ModelSpec | undefined;
      if (initFrom === undefined && config.init_from === undefined) {
        const vocab = intFlag(flags, 'vocab', deriveVocab(dataPath, configPath));
        modelSpec = specFromFlags(flags, vocab);
      }
      const result = runStage(config, { outDir, dataPath, modelSpec, initFrom });
      process.stdout.write(
        `stage ${result.stage}: ${result.stepsRun} steps, ` +
          `${result.checkpoints.length} checkpoints, ` +
          `final eval loss ${result.finalEvalLoss.toFixed(6)}\n` +
          `selected ${result.selectedCheckpoint.path}\n`,
      );
      return 0;
    }
    if (command === 'two-stage') {
      const stage1Config = loadConfig(need(flags, 'stage1-config'));
      const stage2Config = loadConfig(need(flags, 'stage2-config'));
      const stage1Data = need(flags, 'stage1-data');
      const stage2Data = need(flags, 'stage2-data');
      const outDir = need(flags, 'out');
      const vocab = intFlag(flags, 'vocab', deriveVocab(stage1Data, need(flags, 'stage1-config')));
      const result = runTwoStage(stage1Config, stage2Config, {
        outDir,
        stage1Data,
        stage2Data,
        modelSpec: specFromFlags(flags, vocab),
      });
      process.stdout.write(
        `stage1: ${result.stage1.checkpoints.length} checkpoints, ` +
          `selected ${result.stage1.selectedCheckpoint.path}\n` +
          `stage2: ${result.stage2.stepsRun} steps, ` +
          `final eval loss ${result.stage2.finalEvalLoss.toFixed(6)}\n`,
      );
      return 0;
    }
    process.stderr.write(`unknown command ${command}\n${USAGE}`);
    return 1;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 2;
  }
}

// Invoke only when executed directly, not when imported by tests.
const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(entry).href) {
  process.exit(main(process.argv.slice(2)));
}
