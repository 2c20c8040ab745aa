/** Entry point: resume the session named in the URL or sessionStorage,
 * otherwise create one, then mount the app. Keeping the session id in
 * sessionStorage is what makes a browser refresh land back in the same
 * journal-backed session.
 */

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { SessionStore } from "./state.js";

const STORAGE_KEY = "storyalign.session";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("missing #app element");
  }
  const api = new ApiClient("");
  const params = new URLSearchParams(window.location.search);

  let sessionId = params.get("session") ?? sessionStorage.getItem(STORAGE_KEY);
  if (sessionId === null) {
    const annotator = params.get("annotator") ?? "anonymous";
    const created = await api.createSession(annotator);
    sessionId = created.session_id;
  }
  sessionStorage.setItem(STORAGE_KEY, sessionId);

  const store = new SessionStore(api, sessionId);
  new App(root, store);
  await store.refresh();
}

void boot();
