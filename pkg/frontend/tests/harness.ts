/** Spawns the replay-backed Python service for integration tests. */

import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';

const REPO_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), '..', '..');

export const FIXTURES = {
  index: join(REPO_ROOT, 'fixtures', 'e2e', 'index.jsonl'),
  uiTranscripts: join(REPO_ROOT, 'fixtures', 'ui', 'transcripts.jsonl'),
  uiConfig: join(REPO_ROOT, 'fixtures', 'ui', 'config.json'),
  request: readFileSync(join(REPO_ROOT, 'fixtures', 'e2e', 'request.txt'), 'utf-8').trim(),
};

export interface TestServer {
  base: string;
  stop: () => void;
}

export async function startServer(port: number): Promise<TestServer> {
  const store = mkdtempSync(join(tmpdir(), 'steering-store-'));
  const child: ChildProcess = spawn(
    'python3',
    [
      '-m',
      'deepresearch.cli',
      'serve',
      '--corpus',
      FIXTURES.index,
      '--replay',
      FIXTURES.uiTranscripts,
      '--policy',
      FIXTURES.uiConfig,
      '--port',
      String(port),
      '--store',
      store,
    ],
    { cwd: REPO_ROOT, stdio: ['ignore', 'pipe', 'pipe'] },
  );

  const base = await new Promise<string>((resolvePromise, rejectPromise) => {
    const timer = setTimeout(
      () => rejectPromise(new Error('server did not announce its port')),
      15000,
    );
    let output = '';
    child.stdout?.on('data', (chunk: Buffer) => {
      output += chunk.toString();
      const match = output.match(/serving on (http:\/\/127\.0\.0\.1:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolvePromise(match[1]!);
      }
    });
    child.stderr?.on('data', (chunk: Buffer) => {
      process.stderr.write(chunk);
    });
    child.on('exit', (code) => {
      clearTimeout(timer);
      rejectPromise(new Error(`server exited early with code ${code}`));
    });
  });

  return {
    base,
    stop: () => {
      child.kill('SIGTERM');
    },
  };
}
