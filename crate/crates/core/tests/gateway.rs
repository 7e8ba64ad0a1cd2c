mod common;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use common::{Scripted, SelectionFixture};
use mass_core::agents::{
    execute_decisions, selection_problem, DailyStrategy, DecisionProvider, PoolSelector, ProviderError,
    SelectionRequest, StyleRequest,
};
use mass_core::gateway::{
    placeholders, HttpTransport, LlmProvider, ProviderConfig, ReplayTransport, Transport,
};
use proptest::prelude::*;

const STRATEGY: &str = "Prefer cheap, cash-generative large caps.";

fn config() -> ProviderConfig {
    ProviderConfig { retry_backoff_ms: 0, ..ProviderConfig::default() }
}

fn request<'a>(
    fx: &SelectionFixture,
    style: &'a mass_core::agents::AgentStyle,
    features: &'a [(String, String)],
    rows: &'a [mass_core::dataset::FeatureView],
) -> SelectionRequest<'a> {
    SelectionRequest {
        type_index: 0,
        instance_index: 0,
        date: fx.date,
        strategy: STRATEGY,
        style,
        features,
        rows,
        num_stocks: fx.num_stocks,
        repair_hint: None,
    }
}

#[test]
fn worked_example_is_accepted_from_a_recorded_answer() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let req = request(&fx, &style, &features, &rows);
    let dir = tempfile::tempdir().unwrap();
    let probe = LlmProvider::new(config(), Box::new(ReplayTransport::new(dir.path())));
    ReplayTransport::record(dir.path(), &probe.selection_chat(&req, None).unwrap(), fx.response("accepted")).unwrap();

    let replay = Arc::new(ReplayTransport::new(dir.path()));
    let provider = LlmProvider::new(config(), Box::new(replay.clone()));
    let picked = provider.select_stocks(&req).unwrap();
    assert_eq!(picked, ["000858", "600900", "601288"]);
    assert_eq!(replay.served(), 1);
    assert_eq!(replay.network_calls(), 0);
}

#[test]
fn rendered_selection_prompt_is_complete_and_stable() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let req = request(&fx, &style, &features, &rows);
    let provider = LlmProvider::new(config(), Box::new(ReplayTransport::new("unused")));
    let a = provider.selection_chat(&req, None).unwrap();
    let b = provider.selection_chat(&req, None).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    assert_eq!(a.temperature, 0.2);
    assert_eq!(a.messages[0].role, "system");
    let user = &a.messages[1].content;
    assert!(placeholders(user).is_empty(), "unresolved placeholder in {user}");
    assert!(user.contains("Please output 3 stocks you tend to invest in."));
    assert!(user.contains("000858,20190102,0.06295366"));
    assert!(user.contains(STRATEGY));
}

#[test]
fn prose_wrapped_answer_is_accepted() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let script = Arc::new(Scripted::ok(&[fx.response("prose")]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let picked = provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap();
    assert_eq!(picked, ["601288", "600900", "000858"]);
}

#[test]
fn wrong_count_triggers_one_repair_retry() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let script = Arc::new(Scripted::ok(&[fx.response("too_many"), fx.response("accepted")]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let picked = provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap();
    assert_eq!(picked, ["000858", "600900", "601288"]);
    let sent = script.requests.lock().unwrap();
    assert_eq!(sent.len(), 2);
    let retry = &sent[1].messages[1].content;
    assert!(retry.contains("4 stock codes given, 3 requested"));
    assert!(retry.contains("The number of stock codes is correct, actually equal to 3."));
}

#[test]
fn illegal_code_triggers_retry_then_caller_repair() {
    let fx = SelectionFixture::load();
    let ds = fx.dataset();
    let pop = fx.population();
    let script = Arc::new(Scripted::ok(&[fx.response("illegal"), fx.response("illegal")]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let strategies = [DailyStrategy { type_index: 0, date: fx.date, text: STRATEGY.into() }];
    let out = execute_decisions(&pop, &ds, 0, &strategies, &provider).unwrap();
    assert_eq!(out.records[0].selected, ["000858", "600900"]);
    assert_eq!((out.report.retried, out.report.repaired), (1, 1));
    let sent = script.requests.lock().unwrap();
    assert_eq!(sent.len(), 2, "the gateway's retry is the only one");
    assert!(sent[1].messages[1].content.contains("codes not in the input data: 999999"));
}

#[test]
fn repeated_unparseable_answers_surface_as_provider_failure() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let script = Arc::new(Scripted::ok(&["no idea", "still none", "nope"]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let err = provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap_err();
    assert!(matches!(err, ProviderError::Malformed(_)));
    assert_eq!(script.requests.lock().unwrap().len(), 3);
}

#[test]
fn transport_errors_are_retried() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let script = Arc::new(Scripted::new(vec![
        Err(ProviderError::Transport("HTTP 503".into())),
        Ok(fx.response("accepted").to_string()),
    ]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    assert_eq!(provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap().len(), 3);
}

#[test]
fn replay_miss_is_not_retried() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let dir = tempfile::tempdir().unwrap();
    let replay = Arc::new(ReplayTransport::new(dir.path()));
    let provider = LlmProvider::new(config(), Box::new(replay.clone()));
    let err = provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap_err();
    assert!(matches!(err, ProviderError::Unavailable(_)));
}

const PAPER_STYLE_ANSWER: &str = "{'Outline': 'A value-oriented investment approach focusing on fundamentally strong companies with a long-term perspective, leveraging current market undervaluation and stable economic indicators to build a diversified portfolio.',\n\n 'Details': {'Risk Appetite': 'moderate',\n  'Holding Period': 'more than one year',\n  'Strategy Consistency': '0.85',\n  'Rationality': '0.9',\n  'StockPoolSelector': 'IndustryEqualStockSelector',\n  'Others': 'Leverage low CPI and undervalued CSI 300 PE for potential upside.'}}";

#[test]
fn style_answer_in_template_format_parses() {
    let fx = SelectionFixture::load();
    let features = fx.features();
    let script = Arc::new(Scripted::ok(&[PAPER_STYLE_ANSWER]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let req = StyleRequest { type_index: 0, date: fx.date, features: &features, macro_narrative: "CPI is low." };
    let style = provider.generate_style(&req).unwrap();
    assert_eq!(style.pool_selector, PoolSelector::IndustryEqual);
    assert_eq!(style.rationality, 0.9);
    let sent = script.requests.lock().unwrap();
    assert_eq!(sent[0].temperature, 0.7);
    let user = &sent[0].messages[1].content;
    assert!(placeholders(user).is_empty());
    assert!(user.ends_with("Macro data:\nCPI is low.\n\nYour investing style:\n"));
}

#[test]
fn missing_details_is_retried_with_a_repair_instruction() {
    let fx = SelectionFixture::load();
    let features = fx.features();
    let script = Arc::new(Scripted::ok(&["{'Outline': 'growth'}", PAPER_STYLE_ANSWER]));
    let provider = LlmProvider::new(config(), Box::new(script.clone()));
    let req = StyleRequest { type_index: 0, date: fx.date, features: &features, macro_narrative: "m" };
    assert!(provider.generate_style(&req).is_ok());
    let sent = script.requests.lock().unwrap();
    assert_eq!(sent.len(), 2);
    let first = &sent[0].messages[1].content;
    let second = &sent[1].messages[1].content;
    assert!(second.starts_with(first.as_str()));
    assert!(second[first.len()..].contains("Details"));
}

#[test]
fn empty_macro_narrative_is_refused() {
    let provider = LlmProvider::new(config(), Box::new(Scripted::ok(&[])));
    let req = StyleRequest {
        type_index: 0,
        date: chrono::NaiveDate::from_ymd_opt(2019, 1, 2).unwrap(),
        features: &[],
        macro_narrative: "  ",
    };
    assert!(provider.generate_style(&req).is_err());
}

/// Minimal one-shot HTTP server answering a single chat completion.
fn serve_once(reply: &'static str) -> (String, std::thread::JoinHandle<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut content_length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap();
            }
            if line == "\r\n" {
                break;
            }
            head.push_str(&line);
        }
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body).unwrap();
        let payload = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": reply } }] }).to_string();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
        (head, String::from_utf8(body).unwrap())
    });
    (format!("http://{addr}/v1"), handle)
}

#[test]
fn http_transport_speaks_chat_completions() {
    let fx = SelectionFixture::load();
    let (style, features, rows) = (fx.style(), fx.features(), fx.views());
    let (url, server) = serve_once("{'Stock': ['000858', '600900', '601288']}");
    let http = HttpTransport::new(&url, "test-key-123".into(), std::time::Duration::from_secs(10), 600);
    let cfg = ProviderConfig { model_name: "m1".into(), ..config() };
    let provider = LlmProvider::new(cfg, Box::new(http));
    let picked = provider.select_stocks(&request(&fx, &style, &features, &rows)).unwrap();
    assert_eq!(picked.len(), 3);
    let (head, body) = server.join().unwrap();
    assert!(head.starts_with("POST /v1/chat/completions "), "{head}");
    assert!(head.to_ascii_lowercase().contains("authorization: bearer test-key-123"));
    let body: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["model"], "m1");
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

fn code_list() -> impl Strategy<Value = Vec<String>> {
    let codes = ["000858", "002594", "600519", "600900", "601012", "601288", "601888", "603259", "999999", "00085"];
    prop::collection::vec(prop::sample::select(codes.to_vec()), 0..6)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn final_selections_respect_the_pool(first in code_list(), second in code_list()) {
        let fx = SelectionFixture::load();
        let ds = fx.dataset();
        let pop = fx.population();
        let answer = |codes: &Vec<String>| serde_json::json!({ "Stock": codes }).to_string();
        let script = Arc::new(Scripted::ok(&[&answer(&first), &answer(&second)]));
        let provider = LlmProvider::new(config(), Box::new(script.clone()));
        let strategies = [DailyStrategy { type_index: 0, date: fx.date, text: STRATEGY.into() }];
        let out = execute_decisions(&pop, &ds, 0, &strategies, &provider).unwrap();
        let picked = &out.records[0].selected;
        let pool: HashSet<&str> = fx.rows.keys().map(String::as_str).collect();
        let legal_first = selection_problem(&first, &pool, 3).is_none();
        if legal_first {
            prop_assert_eq!(picked, &first);
        }
        if out.report.repaired == 0 {
            // Accepted outright: legal, distinct, exactly the requested count.
            prop_assert!(selection_problem(picked, &pool, 3).is_none());
        }
        prop_assert!(picked.len() <= 3);
        prop_assert!(picked.iter().all(|c| pool.contains(c.as_str())));
        prop_assert_eq!(picked.iter().collect::<HashSet<_>>().len(), picked.len());
    }
}
