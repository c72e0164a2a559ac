use std::sync::OnceLock;

use crate::taxonomy::{builtin_taxonomy, ConceptTaxonomy};

use super::{attribute_recall, CaptionError, CaptionRequest, CaptionResult, CaptionSource};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Genre,
    Instrument,
    Mood,
    Pace,
    Vocals,
    Texture,
    Production,
    Other,
}

fn role_of(category: Option<&str>) -> Role {
    match category {
        Some("genre") => Role::Genre,
        Some("instrument") => Role::Instrument,
        Some("mood") => Role::Mood,
        Some("tempo" | "rhythm") => Role::Pace,
        Some("vocals") => Role::Vocals,
        Some("texture") => Role::Texture,
        Some("production") => Role::Production,
        _ => Role::Other,
    }
}

fn builtin() -> &'static ConceptTaxonomy {
    static TAX: OnceLock<ConceptTaxonomy> = OnceLock::new();
    TAX.get_or_init(builtin_taxonomy)
}

fn list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => (*one).to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn article(next: &str) -> &'static str {
    match next.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

/// One deterministic sentence built from per-role clauses. Every attribute
/// appears verbatim, so recall is 1 by construction.
///
/// Roles come from the taxonomy's category names; with no taxonomy the
/// built-in one is used, and unknown attributes fall into a trailing clause.
pub fn template_caption(
    request: &CaptionRequest,
    taxonomy: Option<&ConceptTaxonomy>,
) -> Result<CaptionResult, CaptionError> {
    request.validate()?;
    let tax = taxonomy.unwrap_or_else(|| builtin());
    let mut by_role: Vec<(Role, Vec<&str>)> = [
        Role::Genre,
        Role::Instrument,
        Role::Mood,
        Role::Pace,
        Role::Vocals,
        Role::Texture,
        Role::Production,
        Role::Other,
    ]
    .iter()
    .map(|&r| (r, Vec::new()))
    .collect();
    for a in &request.attributes {
        let a = a.trim();
        let role = role_of(tax.category_of(a));
        by_role.iter_mut().find(|(r, _)| *r == role).expect("all roles listed").1.push(a);
    }
    let get = |role: Role| by_role.iter().find(|(r, _)| *r == role).map(|(_, v)| v.as_slice()).unwrap_or(&[]);

    let genres = get(Role::Genre);
    let moods = get(Role::Mood);
    let mut head = String::new();
    if !moods.is_empty() {
        head.push_str(&moods.join(", "));
        head.push(' ');
    }
    if genres.is_empty() {
        head.push_str("piece");
    } else {
        head.push_str(&genres.join(" and "));
        head.push_str(" track");
    }
    let mut sentence = format!("{} {head}", article(&head));

    let clauses: [(Role, &str, &str); 6] = [
        (Role::Instrument, "featuring ", ""),
        (Role::Pace, "driven by ", ""),
        (Role::Vocals, "with ", ""),
        (Role::Texture, "with a ", " texture"),
        (Role::Production, "and a ", " sound"),
        (Role::Other, "also described as ", ""),
    ];
    for (role, before, after) in clauses {
        let items = get(role);
        if items.is_empty() {
            continue;
        }
        let body = if matches!(role, Role::Texture | Role::Production) {
            items.join(", ")
        } else {
            list(items)
        };
        let before = if before.ends_with("a ") && article(&body) == "an" {
            before.replacen("a ", "an ", 1)
        } else {
            before.to_string()
        };
        if !sentence.ends_with(' ') {
            sentence.push_str(if role == Role::Instrument { " " } else { ", " });
        }
        sentence.push_str(&before);
        sentence.push_str(&body);
        sentence.push_str(after);
    }
    sentence.push('.');
    let mut chars = sentence.chars();
    let caption = match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => sentence,
    };
    let recall = attribute_recall(&caption, &request.attributes);
    Ok(CaptionResult {
        caption,
        source: CaptionSource::Template,
        attribute_recall: recall,
    })
}
