/** DOM layer: paints one ScreenState into the page and wires the controls
 * back to machine.dispatch().  No state lives here.
 */

import { KioskEvent, KioskMachine, ScreenState } from "./machine.js";

function esc(text: string): string {
  return text.replace(/[&<>"]/g, (ch) => (
    { "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" }[ch] as string
  ));
}

function money(minor: number): string {
  return minor.toLocaleString("en-US");
}

function screenHtml(state: ScreenState, dispense: number): string {
  switch (state.screen) {
    case "Login":
      return `
        <h1>Welcome</h1>
        <p>Insert your card and enter your PIN.</p>
        <form id="login-form" autocomplete="off">
          <label>Card number <input id="pan" inputmode="numeric" required></label>
          <label>PIN <input id="pin" type="password" inputmode="numeric" required></label>
          ${state.retries !== null ? `<p class="hint">${state.retries} PIN ${state.retries === 1 ? "try" : "tries"} remaining.</p>` : ""}
          <button type="submit">Enter</button>
        </form>
        ${state.modal !== null ? `
          <div class="overlay"><div class="modal" role="alertdialog">
            <p>${esc(state.modal)}</p>
            <button id="modal-ok">OK</button>
          </div></div>` : ""}`;
    case "FingerprintPrompt":
      return `
        <h1>Fingerprint check</h1>
        <p>Place a finger on the reader. On this demo kiosk, pick a stored
           sample or upload a MINUTIAE v1 file instead.</p>
        ${state.samples.length > 0 ? `
          <form id="sample-form">
            <label>Stored sample
              <select id="sample">${state.samples.map((s) => `<option>${esc(s)}</option>`).join("")}</select>
            </label>
            <button type="submit">Scan</button>
          </form>` : ""}
        <form id="upload-form">
          <label>Template file <input id="template-file" type="file" accept=".mnt,.txt"></label>
          <button type="submit">Upload</button>
        </form>
        ${state.error !== null ? `<p class="error">${esc(state.error)}</p>` : ""}`;
    case "MenuSelect":
      return `
        <h1>Main menu</h1>
        ${state.notice !== null ? `<p class="hint">${esc(state.notice)}</p>` : ""}
        <div class="menu">
          <button id="menu-withdraw">Withdraw</button>
          <button id="menu-deposit">Deposit</button>
          <button id="menu-balance">Balance</button>
          <button id="menu-statement">Statement</button>
          <button id="menu-exit">Exit</button>
        </div>`;
    case "Withdraw":
    case "Deposit":
      return `
        <h1>${state.screen === "Withdraw" ? "Withdraw" : "Deposit"}</h1>
        <form id="amount-form">
          <label>Amount (minor units, multiples of ${money(dispense)})
            <input id="amount" inputmode="numeric" required></label>
          <button type="submit">Confirm</button>
          <button type="button" id="back">Back</button>
        </form>
        ${state.error !== null ? `<p class="error">${esc(state.error)}</p>` : ""}`;
    case "Statement":
      return `
        <h1>Statement</h1>
        <p>Balance: <strong>${money(state.balance)}</strong></p>
        ${state.records.length === 0 ? "<p>No transactions on record.</p>" : `
          <table><thead><tr><th>#</th><th>Type</th><th>Amount</th><th>Balance after</th></tr></thead>
          <tbody>${state.records.map((r) => `
            <tr><td>${r.seq}</td><td>${esc(r.kind)}</td><td>${money(r.amount)}</td><td>${money(r.resulting_balance)}</td></tr>`).join("")}
          </tbody></table>`}
        <button id="back">Back</button>`;
    case "DoneDialog":
      return `
        <div class="overlay"><div class="modal">
          <p>${esc(state.message)}</p>
          ${state.balance !== null ? `<p>Balance: <strong>${money(state.balance)}</strong></p>` : ""}
          <button id="done-ok">OK</button>
        </div></div>`;
    case "DeniedDialog":
      return `
        <div class="overlay"><div class="modal" role="alertdialog">
          <p>${esc(state.message)}</p>
          <button id="denied-ok">OK</button>
        </div></div>`;
  }
}

function on(root: HTMLElement, id: string, eventName: string, handler: (ev: Event) => void): void {
  const el = root.querySelector(`#${id}`);
  if (el !== null) el.addEventListener(eventName, handler);
}

function field(root: HTMLElement, id: string): string {
  return (root.querySelector(`#${id}`) as HTMLInputElement | null)?.value ?? "";
}

function wire(root: HTMLElement, state: ScreenState, send: (event: KioskEvent) => void): void {
  switch (state.screen) {
    case "Login":
      on(root, "login-form", "submit", (ev) => {
        ev.preventDefault();
        send({ type: "SubmitLogin", pan: field(root, "pan").trim(), pin: field(root, "pin") });
      });
      on(root, "modal-ok", "click", () => send({ type: "DismissModal" }));
      break;
    case "FingerprintPrompt":
      on(root, "sample-form", "submit", (ev) => {
        ev.preventDefault();
        send({ type: "PickSample", sampleId: field(root, "sample") });
      });
      on(root, "upload-form", "submit", (ev) => {
        ev.preventDefault();
        const input = root.querySelector("#template-file") as HTMLInputElement | null;
        const file = input?.files?.[0];
        if (file === undefined) return;
        void file.text().then((text) => send({ type: "SubmitMinutiae", text }));
      });
      break;
    case "MenuSelect":
      on(root, "menu-withdraw", "click", () => send({ type: "Choose", item: "withdraw" }));
      on(root, "menu-deposit", "click", () => send({ type: "Choose", item: "deposit" }));
      on(root, "menu-balance", "click", () => send({ type: "Choose", item: "balance" }));
      on(root, "menu-statement", "click", () => send({ type: "Choose", item: "statement" }));
      on(root, "menu-exit", "click", () => send({ type: "Choose", item: "exit" }));
      break;
    case "Withdraw":
    case "Deposit":
      on(root, "amount-form", "submit", (ev) => {
        ev.preventDefault();
        send({ type: "SubmitAmount", amount: Number(field(root, "amount").trim()) });
      });
      on(root, "back", "click", () => send({ type: "Back" }));
      break;
    case "Statement":
      on(root, "back", "click", () => send({ type: "Back" }));
      break;
    case "DoneDialog":
      on(root, "done-ok", "click", () => send({ type: "AckDone" }));
      break;
    case "DeniedDialog":
      on(root, "denied-ok", "click", () => send({ type: "AckDenied" }));
      break;
  }
}

export function mount(root: HTMLElement, machine: KioskMachine): void {
  const send = (event: KioskEvent) => {
    void machine.dispatch(event).then(draw);
  };
  const draw = () => {
    const banner = machine.offline
      ? `<div class="banner">Cannot reach the switch. <button id="retry">Retry</button></div>`
      : "";
    const disabled = machine.offline ? " disabled" : "";
    root.innerHTML = `${banner}<fieldset class="frame"${disabled}>${screenHtml(machine.state, machine.dispense)}</fieldset>`;
    on(root, "retry", "click", () => send({ type: "Retry" }));
    wire(root, machine.state, send);
  };
  draw();
}
