// Bootstrap: wire the controller to the DOM shell in index.html.

import { GatewayApi } from "./api.js";
import { AppController, EventSourceLike } from "./controller.js";
import { renderAll, PageElements } from "./render.js";

function domEventSource(url: string): EventSourceLike {
  const source = new EventSource(url);
  const like: EventSourceLike = {
    onmessage: null,
    onerror: null,
    close: () => source.close(),
  };
  source.onmessage = (event) => like.onmessage?.({ data: event.data });
  source.onerror = (event) => like.onerror?.(event);
  return like;
}

function pageElements(): PageElements {
  const get = (id: string) => {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id} in page shell`);
    return node;
  };
  return {
    connection: get("connection"),
    banner: get("banner"),
    devices: get("devices"),
    traces: get("traces"),
    input: get("command-input") as HTMLInputElement,
    sendButton: get("command-send") as HTMLButtonElement,
  };
}

function main(): void {
  const page = pageElements();
  const openTraces = new Set<string>();
  const sessionId = `ui-${Math.random().toString(36).slice(2, 10)}`;

  const controller = new AppController({
    sessionId,
    api: new GatewayApi(""),
    eventSourceFactory: domEventSource,
    onChange: (state) => renderAll(page, state, openTraces),
  });

  const submit = () => {
    const text = page.input.value;
    void controller.submit(text).then(() => {
      if (controller.state.banner === null) page.input.value = "";
      renderAll(page, controller.state, openTraces);
    });
  };
  page.sendButton.addEventListener("click", submit);
  page.input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") submit();
  });
  page.input.addEventListener("input", () => {
    page.sendButton.disabled = controller.state.inFlight || page.input.value.trim() === "";
  });

  void controller.start();
}

main();
