//! End-to-end sandbox runs against the host Python interpreter.

use codescore_core::corpus::{CaseKind, TestCase};
use codescore_core::sandbox::{CaseStatus, ExecutionLimits, Sandbox};
use codescore_core::value::Value;

const PY: &str = "python";

fn sandbox() -> Sandbox {
    Sandbox::with_jobs(4).unwrap()
}

fn limits() -> ExecutionLimits {
    ExecutionLimits::default().with_wall_time_ms(3000)
}

#[test]
fn doubling_program_passes() {
    let out = sandbox()
        .run_case("print(int(input())*2)", &TestCase::stdio("4", "8"), PY, &limits())
        .unwrap();
    assert_eq!(out.status, CaseStatus::Pass, "{out:?}");
}

#[test]
fn unbalanced_parenthesis_is_compile_error() {
    let out = sandbox()
        .run_case("print((int(input())*2)", &TestCase::stdio("4", "8"), PY, &limits())
        .unwrap();
    assert_eq!(out.status, CaseStatus::CompileError);
    assert!(out.stderr.contains("SyntaxError") || out.stderr.contains("never closed"), "{}", out.stderr);
}

#[test]
fn infinite_loop_times_out() {
    let lim = ExecutionLimits::default().with_wall_time_ms(1000);
    let out = sandbox()
        .run_case("while True: pass", &TestCase::stdio("", ""), PY, &lim)
        .unwrap();
    assert_eq!(out.status, CaseStatus::Timeout);
    assert!(out.duration_ms >= 1000, "{}", out.duration_ms);
}

#[test]
fn raising_program_is_runtime_error() {
    let out = sandbox()
        .run_case("raise ValueError('x')", &TestCase::stdio("", ""), PY, &limits())
        .unwrap();
    assert_eq!(out.status, CaseStatus::RuntimeError);
}

#[test]
fn wrong_answer_is_wrong_output() {
    let out = sandbox()
        .run_case("print(7)", &TestCase::stdio("4", "8"), PY, &limits())
        .unwrap();
    assert_eq!(out.status, CaseStatus::WrongOutput);
}

#[test]
fn call_mode_compares_return_values() {
    let code = "def add(a, b):\n    return a + b\n";
    let sb = sandbox();
    let ok = TestCase::call("add", vec![Value::Int(2), Value::Int(3)], Value::Int(5));
    let bad = TestCase::call("add", vec![Value::Int(2), Value::Int(3)], Value::Int(6));
    let lists = TestCase::call(
        "add",
        vec![Value::from(vec![1i64]), Value::from(vec![2i64])],
        Value::from(vec![1i64, 2]),
    );
    assert_eq!(sb.run_case(code, &ok, PY, &limits()).unwrap().status, CaseStatus::Pass);
    assert_eq!(sb.run_case(code, &bad, PY, &limits()).unwrap().status, CaseStatus::WrongOutput);
    assert_eq!(sb.run_case(code, &lists, PY, &limits()).unwrap().status, CaseStatus::Pass);
    let missing = TestCase::call("nope", vec![], Value::Null);
    assert_eq!(sb.run_case(code, &missing, PY, &limits()).unwrap().status, CaseStatus::RuntimeError);
}

#[test]
fn tuples_returned_as_sequences() {
    let code = "def f():\n    return (1, [2.5, 'x'], {'k': None})\n";
    let run = sandbox()
        .execute(
            code,
            &CaseKind::Call {
                entry_point: "f".into(),
                args: vec![],
                expected: Value::Null,
            },
            PY,
            &limits(),
        )
        .unwrap();
    assert_eq!(run.failure, None);
    assert_eq!(run.returned.unwrap().canonical(), r#"[1,[2.5,"x"],{"k":null}]"#);
}

#[test]
fn output_flood_is_resource_exceeded() {
    let mut lim = limits();
    lim.max_output_bytes = 10_000;
    let out = sandbox()
        .run_case("while True: print('x' * 1000)", &TestCase::stdio("", ""), PY, &lim)
        .unwrap();
    assert_eq!(out.status, CaseStatus::ResourceExceeded);
    assert!(out.stdout.len() <= 10_000);
}

#[test]
fn memory_hog_is_resource_exceeded() {
    let mut lim = limits();
    lim.memory_bytes = 256 << 20;
    let out = sandbox()
        .run_case("x = bytearray(1 << 31)\nprint(len(x))", &TestCase::stdio("", ""), PY, &lim)
        .unwrap();
    assert_eq!(out.status, CaseStatus::ResourceExceeded, "{out:?}");
}

#[test]
fn deletion_outside_workdir_fails_only_that_case() {
    let victim = tempfile::NamedTempFile::new().unwrap();
    let path = victim.path().display().to_string();
    let code = format!("import os\nos.remove({path:?})\nprint('gone')\n");
    let sb = sandbox();
    let out = sb.run_case(&code, &TestCase::stdio("", "gone"), PY, &limits()).unwrap();
    assert_eq!(out.status, CaseStatus::RuntimeError);
    assert!(out.stderr.contains("PermissionError"), "{}", out.stderr);
    assert!(victim.path().exists());
    // Deleting inside the working directory is fine.
    let local = "open('f.txt','w').write('x')\nimport os\nos.remove('f.txt')\nprint('ok')\n";
    let ok = sb.run_case(local, &TestCase::stdio("", "ok"), PY, &limits()).unwrap();
    assert_eq!(ok.status, CaseStatus::Pass, "{ok:?}");
    // And the next evaluation is unaffected.
    let next = sb
        .run_case("print(int(input())*2)", &TestCase::stdio("4", "8"), PY, &limits())
        .unwrap();
    assert_eq!(next.status, CaseStatus::Pass);
}

#[test]
fn network_access_is_blocked() {
    let code = "import socket\ns = socket.create_connection(('127.0.0.1', 9))\nprint('connected')\n";
    let out = sandbox()
        .run_case(code, &TestCase::stdio("", "connected"), PY, &limits())
        .unwrap();
    assert_eq!(out.status, CaseStatus::RuntimeError);
}

#[test]
fn evaluate_candidate_mixes_statuses() {
    let code = "n = int(input())\nif n < 0:\n    raise ValueError\nprint(n * 2 if n != 3 else 0)\n";
    let cases = vec![
        TestCase::stdio("1", "2"),
        TestCase::stdio("2", "4"),
        TestCase::stdio("3", "6"),
        TestCase::stdio("-1", "-2"),
    ];
    let truth = sandbox().evaluate_candidate(code, &cases, PY, &limits()).unwrap();
    let statuses: Vec<_> = truth.outcomes.iter().map(|o| o.status).collect();
    assert_eq!(
        statuses,
        vec![
            CaseStatus::Pass,
            CaseStatus::Pass,
            CaseStatus::WrongOutput,
            CaseStatus::RuntimeError
        ]
    );
    assert_eq!(truth.pass_ratio, 0.5);
    assert_eq!(truth.executability, 0);
}

#[test]
fn deterministic_statuses_across_runs() {
    let cases: Vec<_> = (0..6).map(|i| TestCase::stdio(i.to_string(), (i * 3).to_string())).collect();
    let code = "n=int(input())\nprint(n*3 if n % 2 else n)\n";
    let sb = sandbox();
    let a = sb.evaluate_candidate(code, &cases, PY, &limits()).unwrap();
    let b = sb.evaluate_candidate(code, &cases, PY, &limits()).unwrap();
    let sa: Vec<_> = a.outcomes.iter().map(|o| o.status).collect();
    let sbb: Vec<_> = b.outcomes.iter().map(|o| o.status).collect();
    assert_eq!(sa, sbb);
    assert_eq!(a.pass_ratio, b.pass_ratio);
}
