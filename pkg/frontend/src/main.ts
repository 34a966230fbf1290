// Entry point: read connection settings and mount the board.
//
// The app is served statically by the cloud node, so the API base defaults to
// the page origin. The bearer token comes from ?token=... (stored) or a
// previously stored value.

import { ApiClient } from "./api.js";
import { Board } from "./board.js";

function readToken(): string | undefined {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("token");
  if (fromQuery) {
    localStorage.setItem("twinstack-token", fromQuery);
    return fromQuery;
  }
  return localStorage.getItem("twinstack-token") ?? undefined;
}

const api = new ApiClient(window.location.origin, readToken());
const board = new Board(
  document.getElementById("app")!,
  api,
  (url) => new EventSource(url),
);
void board.start();
