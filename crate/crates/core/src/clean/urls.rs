use std::collections::HashSet;

/// Lowercases scheme and host and strips trailing slashes; path, query and
/// fragment keep their case.
pub fn normalize_url(url: &str) -> String {
    let url = url.trim();
    let (scheme, rest) = match url.split_once("://") {
        Some((s, r)) => (Some(s.to_ascii_lowercase()), r),
        None => (None, url),
    };
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let mut out = String::with_capacity(url.len());
    if let Some(s) = scheme {
        out.push_str(&s);
        out.push_str("://");
    }
    out.push_str(&rest[..host_end].to_ascii_lowercase());
    out.push_str(&rest[host_end..]);
    while out.ends_with('/') {
        out.pop();
    }
    out
}

/// First occurrence of each normalized URL, in input order. The original
/// spelling of the first occurrence is returned.
pub fn dedup_urls<S: AsRef<str>>(urls: &[S]) -> Vec<String> {
    let mut seen = HashSet::with_capacity(urls.len());
    urls.iter()
        .filter(|u| seen.insert(normalize_url(u.as_ref())))
        .map(|u| u.as_ref().to_string())
        .collect()
}

/// Source of raw page text. Crawling itself is out of scope; this is the
/// seam a fetcher plugs into.
pub trait Fetcher {
    fn fetch(&self, url: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub url: String,
    pub body: Result<String, String>,
}

/// Fetches each distinct URL once.
pub fn fetch_all<S: AsRef<str>>(urls: &[S], fetcher: &dyn Fetcher) -> Vec<Fetched> {
    dedup_urls(urls)
        .into_iter()
        .map(|url| Fetched {
            body: fetcher.fetch(&url),
            url,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_duplicates() {
        assert_eq!(dedup_urls(&["A", "A"]), ["A"]);
    }

    #[test]
    fn host_case_and_trailing_slash() {
        assert_eq!(dedup_urls(&["http://X/", "http://x"]), ["http://X/"]);
        assert_eq!(normalize_url("HTTPS://Example.COM/Path/"), "https://example.com/Path");
        assert_ne!(normalize_url("http://x/A"), normalize_url("http://x/a"));
    }

    #[test]
    fn fetches_each_url_once() {
        struct Echo;
        impl Fetcher for Echo {
            fn fetch(&self, url: &str) -> Result<String, String> {
                Ok(format!("<p>{url}</p>"))
            }
        }
        let got = fetch_all(&["http://a/", "http://A", "http://b"], &Echo);
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].body.as_deref(), Ok("<p>http://b</p>"));
    }

    proptest! {
        #[test]
        fn first_seen_order(ids in prop::collection::vec(0u8..20, 0..60)) {
            let urls: Vec<String> = ids.iter().map(|i| format!("http://site{i}.org/p")).collect();
            let mut expected = Vec::new();
            let mut seen = HashSet::new();
            for u in &urls {
                if seen.insert(u.clone()) {
                    expected.push(u.clone());
                }
            }
            prop_assert_eq!(dedup_urls(&urls), expected);
        }
    }
}
