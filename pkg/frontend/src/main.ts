import { ApiClient } from "./api.js";
import { initApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const base = (window as unknown as { CHATMAP_API_BASE?: string }).CHATMAP_API_BASE ?? "";
  initApp(root, new ApiClient(base));
}
