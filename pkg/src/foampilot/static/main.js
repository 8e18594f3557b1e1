// Browser entry point: the start form creates or reattaches a session and
// hands everything else to ConsoleApp. The session id is kept in the URL
// hash so a reload reattaches and replays.
import { Api } from "./api.js";
import { ConsoleApp } from "./view.js";
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing #${id}`);
    return node;
}
function paramsFor(mode, text, casePath, bashrc) {
    const params = {};
    if (mode === "ask")
        params.question = text;
    if (mode === "configure")
        params.request = text;
    if (mode === "configure" || mode === "run_serial" || mode === "run_hpc") {
        params.case = casePath;
    }
    if (mode === "run_serial" || mode === "run_hpc")
        params.bashrc = bashrc;
    return params;
}
function boot() {
    const api = new Api("");
    const app = new ConsoleApp(document, el("console"), api);
    const modeSelect = el("mode");
    const textInput = el("text");
    const caseInput = el("case");
    const bashrcInput = el("bashrc");
    const startForm = el("start-form");
    const composer = el("composer");
    const composerInput = el("composer-text");
    const syncFields = () => {
        const mode = modeSelect.value;
        caseInput.parentElement.hidden = mode === "chat" || mode === "ask";
        bashrcInput.parentElement.hidden =
            mode !== "run_serial" && mode !== "run_hpc";
        textInput.parentElement.hidden =
            mode === "run_serial" || mode === "run_hpc";
        composer.hidden = mode !== "chat";
    };
    modeSelect.addEventListener("change", syncFields);
    syncFields();
    startForm.addEventListener("submit", (e) => {
        e.preventDefault();
        const mode = modeSelect.value;
        void app
            .start(mode, paramsFor(mode, textInput.value, caseInput.value, bashrcInput.value))
            .then((id) => {
            window.location.hash = id;
            if (mode === "chat" && textInput.value) {
                return app.send(textInput.value);
            }
        })
            .catch((err) => app.view.showBanner(`start failed: ${err.message}`));
    });
    composer.addEventListener("submit", (e) => {
        e.preventDefault();
        const text = composerInput.value.trim();
        if (!text || !app.sessionId)
            return;
        composerInput.value = "";
        void app.send(text);
    });
    const existing = window.location.hash.replace(/^#/, "");
    if (existing)
        app.attach(existing);
}
boot();
