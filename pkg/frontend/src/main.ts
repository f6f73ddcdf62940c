import { ApiClient } from "./api.js";
import { mountApp } from "./ui.js";

// served from /app on the same origin as the API
const api = new ApiClient("");
if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => mountApp(document, api));
} else {
  mountApp(document, api);
}
