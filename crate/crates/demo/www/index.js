import init, { runTimeline, latencyTable, runLivelock } from "./pkg/gpact_demo.js";

const $ = (id) => document.getElementById(id);

function el(tag, attrs = {}, ...kids) {
  const e = document.createElement(tag);
  Object.assign(e, attrs);
  for (const k of kids) e.append(k);
  return e;
}

// Chains as rows, periods as columns.
function traceTable(report) {
  const chains = [...new Set(report.trace.map((t) => t.chain))].sort((a, b) => a - b);
  const periods = report.periods_elapsed;
  const head = el("tr", {}, el("th", { textContent: "chain" }));
  for (let p = 1; p <= periods; p++) head.append(el("th", { textContent: p }));
  const table = el("table", {}, head);
  for (const c of chains) {
    const row = el("tr", {}, el("th", { textContent: c }));
    for (let p = 1; p <= periods; p++) {
      const td = el("td");
      for (const t of report.trace.filter((t) => t.chain === c && t.period === p)) {
        const span = el("div", {
          className: t.failure ? "failed" : t.kind,
          textContent: `${t.actor}: ${t.label}`,
          title: t.failure ?? "",
        });
        td.append(span);
      }
      row.append(td);
    }
    table.append(row);
  }
  return table;
}

function summary(report) {
  const c = report.tx_counts;
  return el("p", {
    textContent: `${report.scenario} ${report.engine}/${report.mode}: ${report.outcome} after ` +
      `${report.periods_elapsed} periods; start=${c.start} segment=${c.segment} root=${c.root} ` +
      `signalling=${c.signalling} relay=${c.relay}`,
  });
}

function showLivelock(r) {
  const out = $("timeline");
  out.replaceChildren();
  for (const round of r.rounds) {
    out.append(el("h3", { textContent: `round ${round.round}` }));
    for (const rep of [round.first, round.second]) out.append(summary(rep), traceTable(rep));
  }
  out.append(el("p", {
    textContent: `storage before ${JSON.stringify(r.initial)}, after ${JSON.stringify(r.last)}; ` +
      `residual locks: ${r.lock_residue.length}`,
  }));
}

function guard(f) {
  return () => {
    $("error").textContent = "";
    try {
      f();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function run() {
  const v = JSON.parse(runTimeline(
    $("scenario").value, $("mode").value, $("engine").value,
    $("faults").value, Number($("timeout").value),
  ));
  if (v.rounds) return showLivelock(v);
  const verdict = "Ok" in v.post_state ? "post-state verified" : `post-state FAILED: ${v.post_state.Err}`;
  $("timeline").replaceChildren(
    summary(v.report),
    traceTable(v.report),
    el("p", { textContent: `${verdict}; before ${JSON.stringify(v.initial)}, after ${JSON.stringify(v.final)}` }),
    el("p", {}, el("code", { textContent: v.machine_line })),
  );
}

function grid() {
  const cells = JSON.parse(latencyTable());
  const cols = cells.slice(0, 4).map((c) => `${c.engine}-${c.mode}`);
  const table = el("table", {}, el("tr", {}, el("th"), ...cols.map((c) => el("th", { textContent: c }))));
  for (let i = 0; i < cells.length; i += 4) {
    const row = el("tr", {}, el("th", { textContent: cells[i].scenario }));
    for (const c of cells.slice(i, i + 4)) {
      const ok = c.measured === c.expected;
      row.append(el("td", {}, `${c.measured} / ${c.expected} `,
        el("span", { className: ok ? "pass" : "fail", textContent: ok ? "PASS" : "FAIL" })));
    }
    table.append(row);
  }
  $("table").replaceChildren(table, el("p", { textContent: "measured / expected" }));
}

await init();
$("run").onclick = guard(run);
$("livelock").onclick = guard(() => showLivelock(JSON.parse(runLivelock($("mode").value, $("engine").value, 3))));
$("grid").onclick = guard(grid);
guard(run)();
