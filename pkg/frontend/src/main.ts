import { ApiClient } from "./api";
import { mountApp, resetViewCaches } from "./app";
import { AppStore } from "./store";
import "./styles.css";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const api = new ApiClient((input, init) => fetch(input, init));
const store = new AppStore(api);

store.subscribe(() => undefined);
mountApp(store, root);

store
  .loadDataset()
  .then(() => resetViewCaches())
  .catch((err) => {
    store.lastError = `cannot reach the review service: ${
      err instanceof Error ? err.message : String(err)
    }`;
    root.prepend(
      Object.assign(document.createElement("div"), {
        className: "error-banner",
        textContent: store.lastError,
      }),
    );
  });
