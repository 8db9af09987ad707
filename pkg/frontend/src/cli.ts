#!/usr/bin/env node
import * as fs from 'node:fs';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { convertAnnotations } from './annotations.js';
import { extract, writeManifest, ManifestEntry } from './extract.js';

yargs(hideBin(process.argv))
  .scriptName('mf2summ-export')
  .command(
    'extract',
    'Convert a PPM frame dump + WAV track into a feature file pair',
    (y) =>
      y
        .option('frames', { type: 'string', demandOption: true, describe: 'directory of P6 .ppm frames' })
        .option('wav', { type: 'string', demandOption: true })
        .option('id', { type: 'string', demandOption: true, describe: 'video id' })
        .option('out', { type: 'string', demandOption: true })
        .option('fps', { type: 'number', default: 2 })
        .option('visual-backbone', { type: 'string', default: 'grid-stats' })
        .option('audio-backbone', { type: 'string', default: 'band-energy' })
        .option('audio-rate', { type: 'number', default: 22050 })
        .option('annotations', { type: 'string', describe: 'optional TSV with per-user frame scores' }),
    (argv) => {
      const result = extract({
        framesDir: argv.frames,
        wavPath: argv.wav,
        videoId: argv.id,
        outDir: argv.out,
        fps: argv.fps,
        visualBackbone: argv['visual-backbone'],
        audioBackbone: argv['audio-backbone'],
        audioSampleRate: argv['audio-rate'],
      });
      const entry: ManifestEntry = result.entry;
      if (argv.annotations) {
        const tsv = fs.readFileSync(argv.annotations, 'utf8');
        entry.user_scores = convertAnnotations(tsv, argv.id, entry.n_frames).userScores;
      }
      const manifestPath = writeManifest(argv.out, [entry]);
      console.log(`${result.visualPath}`);
      console.log(`${result.audioPath}`);
      console.log(`${manifestPath}`);
    },
  )
  .demandCommand(1)
  .strict()
  .fail((msg, err) => {
    console.error(msg ?? err?.message);
    process.exit(1);
  })
  .parse();
