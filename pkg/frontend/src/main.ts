import { startApp } from "./app";

// Served by the triage service at /ui/; API calls go to the same origin.
const root = document.getElementById("app");
if (root) {
  startApp(root, "");
}
