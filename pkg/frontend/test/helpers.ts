/**
 * Shared test plumbing: captured service responses and controllable fetch
 * doubles. Fixtures were recorded against a running service with the
 * five-condition preset loaded, so assertions compare against real payloads
 * rather than hand-written ones.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike } from "../src/api.js";

const here = dirname(fileURLToPath(import.meta.url));

export interface Captured {
  status: number;
  body: unknown;
}

export function fixture(name: string): Captured {
  return JSON.parse(readFileSync(join(here, "fixtures", `${name}.json`), "utf8")) as Captured;
}

export function fixtureBody<T>(name: string): T {
  return fixture(name).body as T;
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

function toResponse(c: Captured): Response {
  return new Response(JSON.stringify(c.body), {
    status: c.status,
    headers: { "content-type": "application/json" },
  });
}

/** Fetch double that answers each call with the next queued capture. */
export function queuedFetch(queue: Captured[]): { fn: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fn: FetchLike = (url, init) => {
    calls.push({ url, init });
    const next = queue.shift();
    if (!next) {
      return Promise.reject(new Error(`unexpected request ${init?.method ?? "GET"} ${url}`));
    }
    return Promise.resolve(toResponse(next));
  };
  return { fn, calls };
}

export interface HeldCall extends RecordedCall {
  respond: (c: Captured) => void;
}

/** Fetch double that holds every call open until the test releases it. */
export function heldFetch(): { fn: FetchLike; calls: HeldCall[] } {
  const calls: HeldCall[] = [];
  const fn: FetchLike = (url, init) =>
    new Promise((resolve) => {
      calls.push({ url, init, respond: (c) => resolve(toResponse(c)) });
    });
  return { fn, calls };
}
