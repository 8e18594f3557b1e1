// Browser entry point: the start form creates or reattaches a session and
// hands everything else to ConsoleApp. The session id is kept in the URL
// hash so a reload reattaches and replays.

import { Api, type Mode } from "./api.js";
import { ConsoleApp } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function paramsFor(mode: Mode, text: string, casePath: string, bashrc: string) {
  const params: Record<string, string> = {};
  if (mode === "ask") params.question = text;
  if (mode === "configure") params.request = text;
  if (mode === "configure" || mode === "run_serial" || mode === "run_hpc") {
    params.case = casePath;
  }
  if (mode === "run_serial" || mode === "run_hpc") params.bashrc = bashrc;
  return params;
}

function boot(): void {
  const api = new Api("");
  const app = new ConsoleApp(document, el("console"), api);

  const modeSelect = el<HTMLSelectElement>("mode");
  const textInput = el<HTMLInputElement>("text");
  const caseInput = el<HTMLInputElement>("case");
  const bashrcInput = el<HTMLInputElement>("bashrc");
  const startForm = el<HTMLFormElement>("start-form");
  const composer = el<HTMLFormElement>("composer");
  const composerInput = el<HTMLInputElement>("composer-text");

  const syncFields = () => {
    const mode = modeSelect.value as Mode;
    caseInput.parentElement!.hidden = mode === "chat" || mode === "ask";
    bashrcInput.parentElement!.hidden =
      mode !== "run_serial" && mode !== "run_hpc";
    textInput.parentElement!.hidden =
      mode === "run_serial" || mode === "run_hpc";
    composer.hidden = mode !== "chat";
  };
  modeSelect.addEventListener("change", syncFields);
  syncFields();

  startForm.addEventListener("submit", (e) => {
    e.preventDefault();
    const mode = modeSelect.value as Mode;
    void app
      .start(mode, paramsFor(mode, textInput.value, caseInput.value, bashrcInput.value))
      .then((id) => {
        window.location.hash = id;
        if (mode === "chat" && textInput.value) {
          return app.send(textInput.value);
        }
      })
      .catch((err: Error) => app.view.showBanner(`start failed: ${err.message}`));
  });

  composer.addEventListener("submit", (e) => {
    e.preventDefault();
    const text = composerInput.value.trim();
    if (!text || !app.sessionId) return;
    composerInput.value = "";
    void app.send(text);
  });

  const existing = window.location.hash.replace(/^#/, "");
  if (existing) app.attach(existing);
}

boot();
