// Browser entry point: mount on #app and poll the same-origin API.

import { makeApi } from "./api.js";
import { createApp } from "./main.js";

const root = document.getElementById("app");
if (root) {
  void createApp({ api: makeApi(""), root }).start();
}
