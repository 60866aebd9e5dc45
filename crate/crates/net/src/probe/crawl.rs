use std::collections::{HashSet, VecDeque};
use std::time::Duration;

use scraper::{Html, Selector};
use url::Url;

use super::{Baseline, HttpClient, HttpConfig, InjectionPoint, ProbeError};
use crate::HttpMethod;

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub seed_url: Url,
    /// Link hops from the seed; 0 only inspects the seed page.
    pub max_depth: usize,
    pub same_origin_only: bool,
    pub request_timeout: Duration,
    pub politeness_delay: Duration,
}

impl CrawlConfig {
    pub fn new(seed_url: Url) -> CrawlConfig {
        CrawlConfig {
            seed_url,
            max_depth: 1,
            same_origin_only: true,
            request_timeout: Duration::from_secs(30),
            politeness_delay: Duration::ZERO,
        }
    }

    pub fn http_config(&self) -> HttpConfig {
        HttpConfig {
            timeout: self.request_timeout,
            politeness: self.politeness_delay,
            ..HttpConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlResult {
    pub points: Vec<InjectionPoint>,
    pub pages_visited: usize,
    pub warnings: Vec<String>,
}

/// A request shape found on a page: target, method and its parameters in
/// document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub url: Url,
    pub method: HttpMethod,
    pub params: Vec<(String, String)>,
}

fn without_query(url: &Url) -> Url {
    let mut u = url.clone();
    u.set_query(None);
    u.set_fragment(None);
    u
}

/// Sets `name`, keeping its first position but the last value seen.
fn upsert(params: &mut Vec<(String, String)>, name: &str, value: String) {
    match params.iter_mut().find(|(k, _)| k == name) {
        Some(slot) => slot.1 = value,
        None => params.push((name.to_string(), value)),
    }
}

fn query_candidate(url: &Url) -> Option<Candidate> {
    let mut params = Vec::new();
    for (k, v) in url.query_pairs() {
        upsert(&mut params, &k, v.into_owned());
    }
    (!params.is_empty()).then(|| Candidate {
        url: without_query(url),
        method: HttpMethod::Get,
        params,
    })
}

/// Query-string and form candidates of one page, plus the links on it.
pub fn extract_candidates(page_url: &Url, html: &str) -> (Vec<Candidate>, Vec<Url>) {
    let doc = Html::parse_document(html);
    let links_sel = Selector::parse("a[href]").expect("valid selector");
    let form_sel = Selector::parse("form").expect("valid selector");
    let field_sel = Selector::parse("input[name], select[name], textarea[name]").expect("valid selector");
    let option_sel = Selector::parse("option").expect("valid selector");

    let mut candidates: Vec<Candidate> = query_candidate(page_url).into_iter().collect();

    for form in doc.select(&form_sel) {
        let el = form.value();
        let action = el.attr("action").map(str::trim).filter(|a| !a.is_empty());
        let Some(target) = (match action {
            Some(a) => page_url.join(a).ok(),
            None => Some(page_url.clone()),
        }) else {
            continue;
        };
        let method = HttpMethod::from_form_attr(el.attr("method"));
        let mut params = Vec::new();
        if method == HttpMethod::Post {
            for (k, v) in target.query_pairs() {
                upsert(&mut params, &k, v.into_owned());
            }
        }
        for field in form.select(&field_sel) {
            let f = field.value();
            let Some(name) = f.attr("name").filter(|n| !n.is_empty()) else {
                continue;
            };
            let value = match f.name() {
                "textarea" => field.text().collect::<String>(),
                "select" => field
                    .select(&option_sel)
                    .find(|o| o.value().attr("selected").is_some())
                    .or_else(|| field.select(&option_sel).next())
                    .map(|o| {
                        o.value()
                            .attr("value")
                            .map(str::to_string)
                            .unwrap_or_else(|| o.text().collect())
                    })
                    .unwrap_or_default(),
                _ => f.attr("value").unwrap_or("").to_string(),
            };
            upsert(&mut params, name, value);
        }
        if !params.is_empty() {
            candidates.push(Candidate {
                url: without_query(&target),
                method,
                params,
            });
        }
    }

    let links = doc
        .select(&links_sel)
        .filter_map(|a| a.value().attr("href"))
        .filter_map(|href| page_url.join(href.trim()).ok())
        .filter(|u| matches!(u.scheme(), "http" | "https"))
        .map(|mut u| {
            u.set_fragment(None);
            u
        })
        .collect();
    (candidates, links)
}

fn same_origin(a: &Url, b: &Url) -> bool {
    a.origin() == b.origin()
}

/// Crawls with a fresh client built from `config`.
pub fn crawl(config: &CrawlConfig) -> Result<CrawlResult, ProbeError> {
    let client = HttpClient::new(&config.http_config());
    crawl_with(&client, config)
}

/// Breadth-first crawl from the seed, then one baseline request per
/// injection point found.
pub fn crawl_with(client: &HttpClient, config: &CrawlConfig) -> Result<CrawlResult, ProbeError> {
    if config.request_timeout.is_zero() {
        return Err(ProbeError::Config("request timeout must be positive".into()));
    }
    let seed = config.seed_url.clone();
    let mut warnings = Vec::new();
    let mut visited: HashSet<String> = HashSet::new();
    let mut queue: VecDeque<(Url, usize)> = VecDeque::from([(seed.clone(), 0)]);
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut pages = 0;

    while let Some((url, depth)) = queue.pop_front() {
        if !visited.insert(url.to_string()) {
            continue;
        }
        let resp = match client.get(&url) {
            Ok(r) => r,
            Err(e) if depth == 0 => {
                return Err(ProbeError::Unreachable {
                    url: url.to_string(),
                    message: e.to_string(),
                })
            }
            Err(e) => {
                log::warn!("skipping page: {e}");
                warnings.push(format!("skipped page: {e}"));
                continue;
            }
        };
        pages += 1;
        if resp.status >= 400 && depth > 0 {
            warnings.push(format!("skipped page {url}: HTTP {}", resp.status));
            continue;
        }
        let (found, links) = extract_candidates(&url, &resp.body);
        candidates.extend(found);
        if depth < config.max_depth {
            for link in links {
                if config.same_origin_only && !same_origin(&seed, &link) {
                    continue;
                }
                if !visited.contains(link.as_str()) {
                    queue.push_back((link, depth + 1));
                }
            }
        }
    }

    let mut seen: HashSet<(String, HttpMethod, String)> = HashSet::new();
    let mut points = Vec::new();
    for cand in candidates {
        for (name, value) in &cand.params {
            let key = (cand.url.to_string(), cand.method, name.clone());
            if !seen.insert(key) {
                continue;
            }
            let other_params = cand.params.iter().filter(|(k, _)| k != name).cloned().collect();
            let mut point = InjectionPoint {
                url: cand.url.clone(),
                method: cand.method,
                parameter: name.clone(),
                value: value.clone(),
                other_params,
                baseline: Baseline {
                    status: 0,
                    body: String::new(),
                    latency: Duration::ZERO,
                },
            };
            match client.send(point.method, &point.url, &point.params_with(value)) {
                Ok(r) => {
                    point.baseline = Baseline {
                        status: r.status,
                        body: r.body,
                        latency: r.latency,
                    };
                    points.push(point);
                }
                Err(e) => {
                    log::warn!("no baseline for {}: {e}", point.id());
                    warnings.push(format!("skipped {}: {e}", point.id()));
                }
            }
        }
    }

    Ok(CrawlResult {
        points,
        pages_visited: pages,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn url(s: &str) -> Url {
        Url::parse(s).unwrap()
    }

    #[test]
    fn query_string_split() {
        let (c, _) = extract_candidates(&url("http://h/p?id=1&name=a"), "<html></html>");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].url.as_str(), "http://h/p");
        assert_eq!(
            c[0].params,
            vec![("id".into(), "1".into()), ("name".into(), "a".into())]
        );
    }

    #[test]
    fn post_form_fields() {
        let html = r#"<form action="/login" method="post">
            <input name="user" value="u"><input type="password" name="pass">
            <select name="role"><option value="a">A</option><option value="b" selected>B</option></select>
            <textarea name="note">hi</textarea>
            <input name="user" value="last">
        </form>"#;
        let (c, _) = extract_candidates(&url("http://h/index"), html);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].method, HttpMethod::Post);
        assert_eq!(c[0].url.as_str(), "http://h/login");
        let names: Vec<_> = c[0].params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        assert_eq!(names, ["user=last", "pass=", "role=b", "note=hi"]);
    }

    #[test]
    fn links_are_resolved() {
        let (_, links) = extract_candidates(
            &url("http://h/a/b"),
            r##"<a href="c?x=1#top">c</a><a href="mailto:x@y">m</a>"##,
        );
        assert_eq!(links, vec![url("http://h/a/c?x=1")]);
    }
}
