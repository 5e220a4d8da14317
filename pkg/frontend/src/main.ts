import { SessionApi } from "./api.js";
import { Dashboard } from "./dashboard.js";

const params = new URLSearchParams(window.location.search);
const sessionId = params.get("session");
const base = params.get("api") ?? "http://127.0.0.1:8700";
const root = document.getElementById("app");

if (!root) {
  throw new Error("missing #app container");
}
if (!sessionId) {
  root.textContent = "pass ?session=<id> (and optionally &api=<base url>)";
} else {
  const dashboard = new Dashboard(root, new SessionApi(base), sessionId);
  dashboard.start();
}
