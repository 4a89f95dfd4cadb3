use pyo3::prelude::*;

use causal_design_py::causal_design_py;

#[test]
fn module_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(causal_design_py);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import causal_design as cd

chain = cd.Dag(3, [(0, 1), (1, 2)])
g = cd.cpdag(chain)
assert g.undirected_count() == 2
assert cd.mec_size(g) == 3
nxt, oriented = cd.apply_intervention(g, chain, 0)
assert oriented == [(0, 1), (1, 2)], oriented
assert cd.action_set(nxt) == []

run = cd.Strategy("minimax").evaluate(chain, budget=2)
assert run["ratios"] == [0.0, 1.0], run

try:
    cd.Strategy("learned")
except ValueError:
    pass
else:
    raise AssertionError("learned without a model")

try:
    cd.Pdag.from_json('{"n": 2, "edges": [[0, 1, "x"]]}')
except ValueError:
    pass
else:
    raise AssertionError("bad tag")
"#,
            None,
            None,
        )
        .inspect_err(|e| e.print(py))
        .unwrap();
    });
}
