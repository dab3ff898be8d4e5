/** Entry point: build the gateway against the serving origin and mount the
 * kiosk.  The dispense multiple mirrors the switch's `dispense.multiple`
 * config; override with `?dispense=<n>` when the switch is not on 50000.
 */

import { Gateway } from "./gateway.js";
import { KioskMachine } from "./machine.js";
import { mount } from "./render.js";

const DEFAULT_DISPENSE = 50_000;

const raw = Number(new URLSearchParams(location.search).get("dispense") ?? "");
const dispense = Number.isInteger(raw) && raw > 0 ? raw : DEFAULT_DISPENSE;

const machine = new KioskMachine(new Gateway(location.origin), dispense);
mount(document.getElementById("kiosk") as HTMLElement, machine);
