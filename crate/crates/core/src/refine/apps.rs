//! Android package names to display names.

const KNOWN_PACKAGES: &[(&str, &str)] = &[
    ("com.android.bluetooth", "Bluetooth"),
    ("com.android.chrome", "Chrome"),
    ("com.android.providers.contacts", "Contacts"),
    ("com.android.providers.telephony", "Messages"),
    ("com.discord", "Discord"),
    ("com.facebook.katana", "Facebook"),
    ("com.facebook.orca", "Messenger"),
    ("com.google.android.apps.docs", "Google Drive"),
    ("com.google.android.apps.maps", "Google Maps"),
    ("com.google.android.apps.photos", "Google Photos"),
    ("com.google.android.gm", "Gmail"),
    ("com.google.android.youtube", "YouTube"),
    ("com.instagram.android", "Instagram"),
    ("com.samsung.android.messaging", "Samsung Messages"),
    ("com.sec.android.app.sbrowser", "Samsung Internet"),
    ("com.snapchat.android", "Snapchat"),
    ("com.twitter.android", "Twitter"),
    ("com.whatsapp", "WhatsApp"),
    ("com.zhiliaoapp.musically", "TikTok"),
    ("org.telegram.messenger", "Telegram"),
    ("org.thoughtcrime.securesms", "Signal"),
];

/// First labels accepted as the root of a reverse-domain package name.
const PACKAGE_ROOTS: &[&str] = &[
    "com", "org", "net", "io", "me", "co", "tv", "app", "de", "uk", "jp", "fr", "ru", "cn", "kr", "in", "us", "edu",
    "gov", "info", "biz",
];

/// Segments that never name the app on their own.
const GENERIC_SEGMENTS: &[&str] = &[
    "android",
    "app",
    "apps",
    "mobile",
    "client",
    "lite",
    "free",
    "pro",
    "full",
    "main",
    "core",
    "base",
    "providers",
    "provider",
    "google",
    "samsung",
    "sec",
    "com",
    "org",
    "net",
    "io",
    "debug",
    "release",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppMatch {
    pub package: String,
    pub name: String,
    /// True when the name came from the known-package table.
    pub known: bool,
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn is_package_name(segment: &str) -> bool {
    let labels: Vec<&str> = segment.split('.').collect();
    labels.len() >= 2 && labels.iter().all(|l| is_label(l)) && PACKAGE_ROOTS.contains(&labels[0])
}

/// Display name for a package: the table entry, or the last non-generic
/// label capitalized.
pub fn app_name_for_package(package: &str) -> Option<AppMatch> {
    if !is_package_name(package) {
        return None;
    }
    if let Some((_, name)) = KNOWN_PACKAGES.iter().find(|(p, _)| *p == package) {
        return Some(AppMatch {
            package: package.to_string(),
            name: name.to_string(),
            known: true,
        });
    }
    let labels: Vec<&str> = package.split('.').skip(1).collect();
    let label = labels
        .into_iter()
        .rev()
        .find(|l| !GENERIC_SEGMENTS.contains(l) && l.len() > 1)?;
    let mut name = String::with_capacity(label.len());
    let mut chars = label.chars();
    if let Some(first) = chars.next() {
        name.extend(first.to_uppercase());
        name.push_str(chars.as_str());
    }
    Some(AppMatch {
        package: package.to_string(),
        name,
        known: false,
    })
}

/// The first package-named segment of a `/`-separated path.
pub fn app_from_path(path: &str) -> Option<AppMatch> {
    path.split('/')
        .flat_map(|seg| seg.split_whitespace())
        .find_map(app_name_for_package)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instagram_from_dpath() {
        let m = app_from_path("/data/user/0/com.instagram.android/databases/direct.db").unwrap();
        assert_eq!(m.name, "Instagram");
        assert!(m.known);
    }

    #[test]
    fn fallback_capitalizes_last_specific_label() {
        let m = app_name_for_package("com.acme.carfinder.android").unwrap();
        assert_eq!(m.name, "Carfinder");
        assert!(!m.known);
    }

    #[test]
    fn non_packages() {
        assert!(app_from_path("/data/msgstore.db").is_none());
        assert!(app_from_path("https://www.google.com/search?q=x").is_none());
        assert!(app_name_for_package("com.android").is_none());
        assert!(app_name_for_package("Com.Example").is_none());
    }
}
