//! Rebuilds the bundled corpus and the replay cache.
//!
//! The corpus is drawn with the reference generator. The cache is recorded by
//! running the real pipeline in record mode against a scripted model that
//! answers from the tables below, then checked by a replay run.
//!
//! Usage: cargo run -p hintgraph --example author_fixtures [REPO_ROOT]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use hintgraph::config::RunConfig;
use hintgraph::corpus::{validate_corpus, write_corpus, Corpus, FindingSeverity, HintStep, Problem, Topic, SCHEMA_VERSION};
use hintgraph::gateway::testing::FnTransport;
use hintgraph::gateway::{
    Cache, CachedImageBackend, ChatResponse, Gateway, ImageTransport, Mode, Part, Purpose, TransportError,
};
use hintgraph::generation::PipelineVariant;
use hintgraph::hashing::sha256_hex;
use hintgraph::pipeline::{plan_items, run_pipeline, Backends, OwnedBackends};
use hintgraph::reference::{
    render_array_diagram, render_fraction_pair_with, ArraySpec, FractionPairSpec, Group, GroupAxis, ObjectKind,
    PALETTE,
};
use hintgraph::svg::{normalize_source, parse_svg, rasterize, RasterImage};
use hintgraph::vqa::{Criterion, EvalReport};

const RECORDED_AT: &str = "2026-01-01T00:00:00Z";
const TARGET_PX: u32 = 512;
const T2I_PX: u32 = 256;

#[derive(Clone)]
enum Fig {
    Array(ArraySpec),
    Fraction(FractionPairSpec),
}

impl Fig {
    fn render(&self) -> String {
        match self {
            Fig::Array(s) => render_array_diagram(s).unwrap(),
            Fig::Fraction(s) => render_fraction_pair_with(s).unwrap(),
        }
    }

    fn baseline_pred(&self) -> Fig {
        match self {
            Fig::Array(s) => {
                let mut s = s.clone();
                s.gap = 16.0;
                s.palette_offset += 1;
                Fig::Array(s)
            }
            Fig::Fraction(s) => {
                let mut s = s.clone();
                s.radius = 66.0;
                s.shade = Some(PALETTE[1].into());
                Fig::Fraction(s)
            }
        }
    }

    fn hint_first_pred(&self) -> Fig {
        match self {
            Fig::Array(s) => {
                let mut s = s.clone();
                s.gap = 22.0;
                s.palette_offset += 2;
                s.caption = None;
                Fig::Array(s)
            }
            Fig::Fraction(s) => {
                let mut s = s.clone();
                s.radius = 54.0;
                s.shade = Some(PALETTE[2].into());
                s.per_part_labels = false;
                Fig::Fraction(s)
            }
        }
    }

    /// What a pixel generator might plausibly draw instead: wrong counts,
    /// no labels.
    fn t2i_image(&self, salt: usize) -> Vec<u8> {
        let svg = match self {
            Fig::Array(s) => {
                let mut w = ArraySpec::new(s.cols, s.rows + 1, ObjectKind::Rect);
                w.palette_offset = 3 + salt;
                render_array_diagram(&w).unwrap()
            }
            Fig::Fraction(s) => {
                let mut w = FractionPairSpec::new(s.denominator + 1, s.shaded_left, s.shaded_right);
                w.captions = false;
                w.shade = Some(PALETTE[(3 + salt) % PALETTE.len()].into());
                render_fraction_pair_with(&w).unwrap()
            }
        };
        rasterize(&parse_svg(&svg).unwrap(), T2I_PX).unwrap().to_png()
    }
}

struct Spec {
    id: String,
    topic: usize,
    statement: String,
    statement_fig: Option<Fig>,
    hints: Vec<(String, Option<Fig>)>,
    /// What the evaluated diagram must show, e.g. "7 rows of 2 circles".
    focus: String,
    /// The objects that must appear.
    components: String,
    expr: String,
    t2i_description: String,
    hint_first_text: String,
}

impl Spec {
    fn eval_fig(&self) -> &Fig {
        self.hints.iter().rev().find_map(|(_, f)| f.as_ref()).expect("diagram step")
    }
}

const TOPICS: [(&str, &str); 5] = [
    ("divide-by-2", "Divide by 2"),
    ("multiply-by-2", "Multiple by 2 (or 4)"),
    ("multiply-by-1", "Multiply by 1 (or 0)"),
    ("comparing-fractions", "Comparing Fractions"),
    ("area", "Area Formulation Intuition"),
];

fn arr(rows: u32, cols: u32, object: ObjectKind) -> ArraySpec {
    ArraySpec::new(rows, cols, object)
}

fn plural(n: u32, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn specs() -> Vec<Spec> {
    let mut out = Vec::new();

    for n in [6u32, 8, 10, 12, 14, 16] {
        let half = n / 2;
        let fig = Fig::Array(arr(2, half, ObjectKind::Circle).numbered());
        let hints = if n % 4 == 0 {
            vec![
                ("Dividing by 2 means making 2 equal groups.".to_string(), None),
                (format!("Put the {n} circles into 2 equal rows. How many circles are in each row?"), Some(fig)),
                (format!("Each row has {half} circles, so {n} ÷ 2 = {half}."), None),
            ]
        } else {
            vec![
                (format!("Put the {n} circles into 2 equal rows. How many circles are in each row?"), Some(fig)),
                (format!("Each row has {half} circles, so {n} ÷ 2 = {half}."), None),
            ]
        };
        out.push(Spec {
            id: format!("div2-{n}"),
            topic: 0,
            statement: format!("{n} ÷ 2 = □"),
            statement_fig: None,
            hints,
            focus: format!("{n} circles split into 2 equal rows of {half}"),
            components: format!("{n} circles arranged in 2 rows"),
            expr: format!("{n} ÷ 2"),
            t2i_description: format!("Two rows of {half} numbered circles, {n} circles in total, numbered 1 to {n}."),
            hint_first_text: format!("Share the {n} circles equally between 2 rows and count one row."),
        });
    }

    for (r, c) in [(2u32, 3u32), (7, 2), (4, 3), (2, 5), (4, 4), (2, 8)] {
        let mut spec = arr(r, c, ObjectKind::Circle).numbered();
        // keeps 2 x n arrays apart from the division topic
        spec.palette_offset = 3;
        let fig = Fig::Array(spec);
        let total = r * c;
        let picture = format!("Picture {r} × {c} as {r} rows with {c} circles in each row. Count all the circles.");
        let hints = if r == 4 {
            vec![
                ("Multiplying by 4 is the same as doubling twice.".to_string(), None),
                (picture, Some(fig)),
                (format!("There are {total} circles, so {r} × {c} = {total}."), None),
            ]
        } else {
            vec![(picture, Some(fig)), (format!("There are {total} circles, so {r} × {c} = {total}."), None)]
        };
        let t2i_description = if (r, c) == (7, 2) {
            "2x7 grid of numbered circles, where numbers from 1 to 14 are arranged in seven rows and two columns".to_string()
        } else {
            format!("{r} rows of {c} numbered circles, numbered 1 to {total}.")
        };
        out.push(Spec {
            id: format!("mul2-{r}x{c}"),
            topic: 1,
            statement: format!("{r} × {c} = □"),
            statement_fig: None,
            hints,
            focus: format!("{r} rows of {c} circles each"),
            components: format!("{total} circles in {r} rows"),
            expr: format!("{r} × {c}"),
            t2i_description,
            hint_first_text: format!("Draw {r} rows of {c} circles and count them all."),
        });
    }
    for (a, b) in [(3u32, 2u32), (4, 2), (5, 4)] {
        let first = Fig::Array(arr(a, b, ObjectKind::Circle).numbered().with_caption(format!("{a} × {b}")));
        let second = Fig::Array(arr(b, a, ObjectKind::Circle).numbered().with_caption(format!("{b} × {a}")));
        out.push(Spec {
            id: format!("mul2-swap-{a}x{b}"),
            topic: 1,
            statement: format!("{a} × {b} = {b} × □"),
            statement_fig: None,
            hints: vec![
                (format!("Draw {a} rows of {b} circles."), Some(first)),
                (format!("Turn the array on its side: now there are {b} rows of {a} circles."), Some(second)),
                (format!("Both arrays have the same number of circles, so □ = {a}."), None),
            ],
            focus: format!("{b} rows of {a} circles each"),
            components: format!("{} circles in {b} rows", a * b),
            expr: format!("{b} × {a}"),
            t2i_description: format!("{b} rows of {a} numbered circles with the caption {b} × {a}."),
            hint_first_text: format!("Turn the {a} × {b} array on its side."),
        });
    }

    for (a, b) in [(1u32, 3u32), (1, 5), (4, 1), (1, 6), (3, 1), (1, 8)] {
        let caption = format!("{} of {}", plural(a, "group"), plural(b, "circle"));
        let fig = Fig::Array(arr(a, b, ObjectKind::Circle).with_caption(caption.clone()));
        out.push(Spec {
            id: format!("mul1-{a}x{b}"),
            topic: 2,
            statement: format!("{a} × {b} = □"),
            statement_fig: None,
            hints: vec![
                (format!("Think of {a} × {b} as {caption}. How many circles is that?"), Some(fig)),
                (format!("Multiplying by 1 leaves a number unchanged, so {a} × {b} = {}.", a * b), None),
            ],
            focus: caption.clone(),
            components: format!("{} and the caption \"{caption}\"", plural(a * b, "circle")),
            expr: format!("{a} × {b}"),
            t2i_description: format!("{caption}, drawn as a simple row of dots."),
            hint_first_text: format!("Draw {caption} and count."),
        });
    }

    for (d, l, r) in [(4u32, 1u32, 2u32), (2, 1, 2), (3, 2, 1), (4, 3, 2), (3, 1, 3), (6, 2, 5)] {
        let fig = Fig::Fraction(FractionPairSpec::new(d, l, r));
        let answer = match l.cmp(&r) {
            std::cmp::Ordering::Less => "<",
            std::cmp::Ordering::Equal => "=",
            std::cmp::Ordering::Greater => ">",
        };
        let hints = if d == 2 {
            vec![
                ("Which circle has more of its area shaded?".to_string(), Some(fig)),
                (format!("{l}/{d} {answer} {r}/{d}"), None),
            ]
        } else {
            vec![
                ("Fractions with the same denominator split a whole into equal parts.".to_string(), None),
                ("Which circle has more of its area shaded?".to_string(), Some(fig)),
                (format!("{l}/{d} {answer} {r}/{d}"), None),
            ]
        };
        out.push(Spec {
            id: format!("frac-{l}-{r}-of-{d}"),
            topic: 3,
            statement: format!("Compare using <, > or =: {l}/{d} □ {r}/{d}"),
            statement_fig: None,
            hints,
            focus: format!("the fractions {l}/{d} and {r}/{d}"),
            components: "two circles split into equal parts".into(),
            expr: format!("{l}/{d} and {r}/{d}"),
            t2i_description: format!("Two pie charts showing {l}/{d} and {r}/{d} shaded."),
            hint_first_text: format!("Shade {l}/{d} of one circle and {r}/{d} of another and compare."),
        });
    }
    for (d, l, r) in [(4u32, 1u32, 3u32), (5, 2, 4), (6, 3, 4)] {
        let mut plain = FractionPairSpec::new(d, l, r);
        plain.per_part_labels = false;
        plain.captions = false;
        let labeled = FractionPairSpec::new(d, l, r);
        out.push(Spec {
            id: format!("frac-steps-{l}-{r}-of-{d}"),
            topic: 3,
            statement: format!("Which is larger, {l}/{d} or {r}/{d}?"),
            statement_fig: None,
            hints: vec![
                (format!("Split two equal circles into {d} equal parts and shade {l} and {r} of them."), Some(Fig::Fraction(plain))),
                ("Label each part and each circle with its fraction.".to_string(), Some(Fig::Fraction(labeled))),
                (format!("{r}/{d} covers more of its circle, so it is larger."), None),
            ],
            focus: format!("the fractions {l}/{d} and {r}/{d} with labeled parts"),
            components: "two circles with every part labeled".into(),
            expr: format!("{l}/{d} and {r}/{d}"),
            t2i_description: format!("Two labeled pie charts for {l}/{d} and {r}/{d}."),
            hint_first_text: "Label every part.".into(),
        });
    }

    for (i, (r, c)) in [(2u32, 2u32), (2, 3), (3, 3), (3, 4), (2, 5), (4, 2)].into_iter().enumerate() {
        let letter = (b'A' + i as u8) as char;
        let mut shape = arr(r, c, ObjectKind::Rect);
        shape.palette_offset = 4;
        let fig = Fig::Array(arr(r, c, ObjectKind::Rect).numbered().with_caption(format!("{r} rows of {c}")));
        out.push(Spec {
            id: format!("area-{r}x{c}"),
            topic: 4,
            statement: format!("What is the area of shape {letter}? Each small square is 1 square unit."),
            statement_fig: Some(Fig::Array(shape)),
            hints: vec![
                (format!("Count the squares row by row: there are {r} rows of {c} square units."), Some(fig)),
                (format!("{r} × {c} = {} square units.", r * c), None),
            ],
            focus: format!("{r} rows of {c} square units"),
            components: format!("{} unit squares", r * c),
            expr: format!("the area of a {r} by {c} rectangle"),
            t2i_description: format!("A {r} by {c} grid of numbered squares."),
            hint_first_text: "Count the rows and the squares in each row.".to_string(),
        });
    }
    for (i, (r, c)) in [(3u32, 2u32), (4, 3)].into_iter().enumerate() {
        let letter = (b'P' + i as u8) as char;
        let mut shape = arr(r, c, ObjectKind::Rect);
        shape.palette_offset = 4;
        let rows = Fig::Array(arr(r, c, ObjectKind::Rect).with_groups(
            GroupAxis::Rows,
            (0..r)
                .map(|k| Group {
                    span: 1,
                    fill: Some(PALETTE[k as usize % PALETTE.len()].into()),
                    label: Some(format!("{c}")),
                })
                .collect(),
        ));
        let counted = Fig::Array(arr(r, c, ObjectKind::Rect).numbered().with_caption(format!("{r} × {c} = {}", r * c)));
        out.push(Spec {
            id: format!("area-steps-{r}x{c}"),
            topic: 4,
            statement: format!("Find the area of shape {letter} in square units."),
            statement_fig: Some(Fig::Array(shape)),
            hints: vec![
                (format!("Each row of the shape has {c} square units."), Some(rows)),
                (format!("There are {r} rows, so multiply: {r} × {c}."), Some(counted)),
                (format!("The area is {} square units.", r * c), None),
            ],
            focus: format!("{r} rows of {c} numbered square units"),
            components: format!("{} numbered unit squares", r * c),
            expr: format!("{r} × {c}"),
            t2i_description: format!("A {r} by {c} grid of numbered squares with a caption."),
            hint_first_text: "Multiply the rows by the squares per row.".into(),
        });
    }
    out
}

fn build_corpus(specs: &[Spec]) -> Corpus {
    let topics = TOPICS
        .iter()
        .enumerate()
        .map(|(ti, (id, title))| Topic {
            id: id.to_string(),
            title: title.to_string(),
            problems: specs
                .iter()
                .filter(|s| s.topic == ti)
                .map(|s| Problem {
                    id: s.id.clone(),
                    topic_id: id.to_string(),
                    statement: s.statement.clone(),
                    statement_diagram: s.statement_fig.as_ref().map(Fig::render),
                    hints: s
                        .hints
                        .iter()
                        .enumerate()
                        .map(|(i, (text, fig))| HintStep {
                            index: i,
                            text: text.clone(),
                            diagram: fig.as_ref().map(Fig::render),
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    Corpus {
        schema_version: SCHEMA_VERSION,
        topics,
    }
}

const MUL_7X2: &str = "mul2-7x2";
const FRAC_1_2: &str = "frac-1-2-of-2";

fn table_questions(id: &str) -> Option<[&'static str; 10]> {
    match id {
        MUL_7X2 => Some([
            "Does the diagram clearly show 7 rows of 2 circles each?",
            "Is the arrangement of circles in the diagram easy to interpret?",
            "Does the diagram effectively illustrate the concept of multiplication as repeated addition?",
            "Are the circles in the diagram labeled in a way that supports understanding the total count?",
            "Does the diagram align with the text feedback by visually representing 7 rows of 2 circles?",
            "Does the diagram accurately show 7 rows of circles as mentioned in the text feedback?",
            "Are there exactly 2 circles in each row as described in the text feedback?",
            "Are the circles in the diagram correctly labeled from 1 to 14?",
            "Is the alignment and positioning of the circles consistent with the description in the text feedback?",
            "Does the diagram follow standard mathematical notation and conventions for representing multiplication?",
        ]),
        FRAC_1_2 => Some([
            "Does the diagram clearly represent the fractions 1/2 and 2/2?",
            "Does the diagram effectively use shading to differentiate the fractions?",
            "Is the diagram aligned with the hint text by showing the shaded areas for comparison?",
            "Can students easily interpret the shaded and unshaded portions in the diagram?",
            "Does the diagram avoid any misleading or ambiguous elements in representing the fractions?",
            "Does the diagram include both circles as described in the hint text?",
            "Are the fractions labeled correctly as 1/2 and 2/2 in the diagram?",
            "Is the shading in the diagram accurately representing the fractions as described?",
            "Are the circles in the diagram properly aligned and positioned according to the standard layout?",
            "Does the diagram follow standard mathematical notation in representing the fractions and shaded areas?",
        ]),
        _ => None,
    }
}

fn questions(s: &Spec) -> Vec<String> {
    if let Some(q) = table_questions(&s.id) {
        return q.iter().map(|x| x.to_string()).collect();
    }
    vec![
        format!("Does the diagram clearly show {}?", s.focus),
        format!("Would the diagram help a student work out {}?", s.expr),
        format!("Does the diagram match the reasoning of the hint about {}?", s.focus),
        format!("Is the arrangement in the diagram for {} easy to read at a glance?", s.expr),
        format!("Is the diagram for {} free of misleading or ambiguous elements?", s.expr),
        format!("Does the diagram include {}?", s.components),
        format!("Are the numbers and labels in the diagram correct for {}?", s.expr),
        format!("Are the objects in the diagram for {} evenly spaced and aligned?", s.expr),
        format!("Does the diagram show everything needed for {}?", s.expr),
        format!("Does the diagram for {} follow standard math notation?", s.expr),
    ]
}

fn question_reply(qs: &[String]) -> String {
    let items: Vec<serde_json::Value> = Criterion::ALL
        .iter()
        .zip(qs)
        .map(|(c, q)| serde_json::json!({"criterion": c.slug(), "question": q}))
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "questions": items })).unwrap()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum Role {
    Gt,
    Pred(PipelineVariant),
}

/// Yes counts as (semantic, syntactic), first `k` questions of a category
/// answered yes.
fn marks(sem: usize, syn: usize) -> [bool; 10] {
    let mut m = [false; 10];
    for (i, slot) in m.iter_mut().enumerate() {
        *slot = if i < 5 { i < sem } else { i - 5 < syn };
    }
    m
}

/// Splits `total` over `n` items, at most 5 each, larger shares first.
fn spread(total: usize, n: usize) -> Vec<usize> {
    assert!(total <= 5 * n, "{total} over {n} items");
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

fn reasoning(yes: bool, criterion: Criterion, pid: &str) -> String {
    let topic = criterion.title().to_lowercase();
    match (yes, pid) {
        (true, FRAC_1_2) => "Yes. Both circles are drawn and the shaded halves make the comparison easy to see.".into(),
        (false, FRAC_1_2) => format!(
            "No. The circles and their shading do not clearly convey the fractions named in the question, which hurts {topic}."
        ),
        (true, MUL_7X2) => "Yes. The circles are laid out as 7 rows of 2 and numbered 1 to 14.".into(),
        (true, _) => format!("Yes. The diagram meets this check on {topic}; the relevant objects and labels are visible."),
        (false, _) => format!("No. This part is missing or unclear in the diagram, so it falls short on {topic}."),
    }
}

struct Plan {
    marks: HashMap<(String, Role), [bool; 10]>,
}

fn assign(
    plan: &mut Plan,
    items: &BTreeMap<usize, Vec<String>>,
    role: Role,
    totals: &[(usize, usize)],
    fixed: &HashMap<&str, [bool; 10]>,
) {
    for (ti, pids) in items {
        let (mut sem, mut syn) = totals[*ti];
        let free: Vec<&String> = pids.iter().filter(|p| !fixed.contains_key(p.as_str())).collect();
        for p in pids {
            if let Some(m) = fixed.get(p.as_str()) {
                sem -= m[..5].iter().filter(|x| **x).count();
                syn -= m[5..].iter().filter(|x| **x).count();
                plan.marks.insert((p.clone(), role), *m);
            }
        }
        for (p, (a, b)) in free.iter().zip(spread(sem, free.len()).into_iter().zip(spread(syn, free.len()))) {
            plan.marks.insert(((*p).clone(), role), marks(a, b));
        }
    }
}

fn items_by_topic(corpus: &Corpus, variant: PipelineVariant) -> BTreeMap<usize, Vec<String>> {
    let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for item in plan_items(corpus, variant, 0, None) {
        let ti = TOPICS.iter().position(|(id, _)| *id == item.topic_id).unwrap();
        out.entry(ti).or_default().push(item.problem.id.clone());
    }
    out
}

fn png_of_svg(src: &str) -> Vec<u8> {
    let normalized = normalize_source(src).unwrap();
    rasterize(&parse_svg(&normalized).unwrap(), TARGET_PX).unwrap().to_png()
}

fn clip(svg: &str) -> String {
    let re = regex::Regex::new(r#"viewBox="([-\d.]+) ([-\d.]+) ([-\d.]+) ([-\d.]+)""#).unwrap();
    let c = re.captures(svg).unwrap();
    let w: f64 = c[3].parse::<f64>().unwrap() * 0.7;
    re.replace(svg, format!(r#"viewBox="{} {} {} {}""#, &c[1], &c[2], w, &c[4]).as_str())
        .into_owned()
}

struct Oracle {
    by_statement: HashMap<String, usize>,
    specs: Vec<Spec>,
    image_owner: HashMap<String, (String, Role)>,
    marks: HashMap<(String, Role), [bool; 10]>,
    questions: HashMap<String, Vec<String>>,
    /// Problems whose first generation reply is clipped, per variant.
    clipped: Vec<(PipelineVariant, &'static str)>,
}

impl Oracle {
    fn spec_for_generation(&self, prompt: &str) -> &Spec {
        let rest = prompt.split("Now the target problem:\nProblem: ").nth(1).expect("target block");
        let statement = rest.lines().next().unwrap();
        &self.specs[self.by_statement[statement]]
    }

    fn pred_svg(&self, s: &Spec, variant: PipelineVariant) -> String {
        match variant {
            PipelineVariant::HintFirst => s.eval_fig().hint_first_pred().render(),
            _ => s.eval_fig().baseline_pred().render(),
        }
    }

    fn answer(&self, variant: PipelineVariant, req: &hintgraph::gateway::ChatRequest) -> String {
        let prompt = req.messages[0].text_content();
        match req.purpose {
            Purpose::Generation => {
                let s = self.spec_for_generation(&prompt);
                let mut svg = self.pred_svg(s, variant);
                if req.messages.len() == 1 && self.clipped.iter().any(|(v, p)| *v == variant && *p == s.id) {
                    svg = clip(&svg);
                }
                match variant {
                    PipelineVariant::HintFirst => format!("Hint: {}\n\n```svg\n{svg}\n```", s.hint_first_text),
                    _ => format!("```svg\n{svg}\n```"),
                }
            }
            Purpose::T2iDescription => self.spec_for_generation(&prompt).t2i_description.clone(),
            Purpose::QuestionGen => {
                let rest = prompt.split("Problem:\n").nth(1).unwrap();
                let s = &self.specs[self.by_statement[rest.lines().next().unwrap()]];
                question_reply(&self.questions[&s.id])
            }
            Purpose::Vqa => {
                let png = req.messages[0]
                    .parts
                    .iter()
                    .find_map(|p| match p {
                        Part::Image { data, .. } => Some(data),
                        _ => None,
                    })
                    .unwrap();
                let (pid, role) = self.image_owner.get(&sha256_hex(png)).expect("known image");
                let question = prompt.rsplit("Question: ").next().unwrap().trim();
                let idx = self.questions[pid].iter().position(|q| q == question).expect("known question");
                let yes = self.marks[&(pid.clone(), *role)][idx];
                reasoning(yes, Criterion::ALL[idx], pid)
            }
        }
    }
}

struct DescriptionImages(HashMap<String, Vec<u8>>);

impl ImageTransport for DescriptionImages {
    fn generate(&self, _: &str, prompt: &str, _: &str) -> Result<Vec<u8>, TransportError> {
        self.0
            .get(prompt)
            .cloned()
            .ok_or_else(|| TransportError::Fatal(format!("no image for {prompt:?}")))
    }
}

fn config(root: &Path, runs: &Path, variant: PipelineVariant, mode: Mode) -> RunConfig {
    RunConfig {
        corpus: root.join("corpus/sample.json"),
        variant,
        mode,
        run_id: Some(variant.as_str().into()),
        cache_dir: root.join("fixtures/cache"),
        runs_dir: runs.to_path_buf(),
        ..Default::default()
    }
}

fn close(report: &EvalReport, want: [Option<f64>; 6]) {
    let o = &report.overall;
    let got = [
        Some(o.gt_sem),
        Some(o.gt_syn),
        Some(o.pred_sem),
        Some(o.pred_syn),
        report.accuracy_sem,
        report.accuracy_syn,
    ];
    for (g, w) in got.iter().zip(want) {
        if let (Some(g), Some(w)) = (g, w) {
            assert!((g - w).abs() <= 0.005, "{}: got {g}, want {w}", report.label);
        }
    }
}

fn main() {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../.."));
    let specs = specs();
    let corpus = build_corpus(&specs);
    let findings = validate_corpus(&corpus);
    for f in &findings {
        eprintln!("{f}");
    }
    assert!(findings.iter().all(|f| f.severity != FindingSeverity::Error));
    std::fs::create_dir_all(root.join("corpus")).unwrap();
    write_corpus(&corpus, root.join("corpus/sample.json")).unwrap();

    // marks per item and role
    let mut plan = Plan { marks: HashMap::new() };
    let single = items_by_topic(&corpus, PipelineVariant::Baseline);
    for pids in single.values() {
        assert_eq!(pids.len(), 5);
    }
    for special in [MUL_7X2, FRAC_1_2] {
        assert!(single.values().flatten().any(|p| p == special), "{special} was picked as the in-context example");
    }
    let mut fixed_gt = HashMap::new();
    fixed_gt.insert(MUL_7X2, [true; 10]);
    fixed_gt.insert(FRAC_1_2, [false, false, true, false, true, false, false, false, false, false]);
    let mut fixed_pred = HashMap::new();
    fixed_pred.insert(MUL_7X2, [true; 10]);
    fixed_pred.insert(FRAC_1_2, [true; 10]);
    let none = HashMap::new();
    assign(&mut plan, &single, Role::Gt, &[(25, 25), (25, 24), (25, 25), (18, 12), (13, 13)], &fixed_gt);
    assign(
        &mut plan,
        &single,
        Role::Pred(PipelineVariant::Baseline),
        &[(25, 22), (23, 21), (24, 23), (14, 14), (14, 15)],
        &fixed_pred,
    );
    assign(
        &mut plan,
        &single,
        Role::Pred(PipelineVariant::HintFirst),
        &[(20, 18), (19, 17), (19, 18), (17, 16), (17, 16)],
        &none,
    );
    assign(&mut plan, &single, Role::Pred(PipelineVariant::T2i), &[(3, 3), (3, 2), (3, 3), (3, 2), (3, 3)], &none);
    let multi = items_by_topic(&corpus, PipelineVariant::OnTask);
    assert_eq!(multi.values().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
    let mut gt_multi = vec![(0, 0); 5];
    gt_multi[1] = (9, 8);
    gt_multi[3] = (9, 8);
    gt_multi[4] = (5, 4);
    let mut pred_multi = vec![(0, 0); 5];
    pred_multi[1] = (10, 9);
    pred_multi[3] = (9, 7);
    pred_multi[4] = (5, 4);
    assign(&mut plan, &multi, Role::Gt, &gt_multi, &none);
    assign(&mut plan, &multi, Role::Pred(PipelineVariant::OnTask), &pred_multi, &none);

    // every rendered image must belong to exactly one (item, role)
    let mut image_owner: HashMap<String, (String, Role)> = HashMap::new();
    let mut t2i_pngs = HashMap::new();
    let mut own = |png: &[u8], pid: &str, role: Role| {
        let prev = image_owner.insert(sha256_hex(png), (pid.to_string(), role));
        assert!(prev.is_none() || prev == Some((pid.to_string(), role)), "image shared by {pid} and {prev:?}");
    };
    let evaluated: Vec<(&Spec, bool)> = specs
        .iter()
        .filter_map(|s| {
            let multi_item = multi.values().flatten().any(|p| *p == s.id);
            let single_item = single.values().flatten().any(|p| *p == s.id);
            (multi_item || single_item).then_some((s, multi_item))
        })
        .collect();
    for (s, multi_item) in &evaluated {
        own(&png_of_svg(&s.eval_fig().render()), &s.id, Role::Gt);
        if *multi_item {
            own(&png_of_svg(&s.eval_fig().baseline_pred().render()), &s.id, Role::Pred(PipelineVariant::OnTask));
        } else {
            own(&png_of_svg(&s.eval_fig().baseline_pred().render()), &s.id, Role::Pred(PipelineVariant::Baseline));
            own(&png_of_svg(&s.eval_fig().hint_first_pred().render()), &s.id, Role::Pred(PipelineVariant::HintFirst));
            let raw = s.eval_fig().t2i_image(s.topic);
            let reencoded = RasterImage::from_png(&raw, sha256_hex(&raw)).unwrap().to_png();
            own(&reencoded, &s.id, Role::Pred(PipelineVariant::T2i));
            t2i_pngs.insert(s.t2i_description.clone(), raw);
        }
    }

    let oracle = Arc::new(Oracle {
        by_statement: specs.iter().enumerate().map(|(i, s)| (s.statement.clone(), i)).collect(),
        questions: specs.iter().map(|s| (s.id.clone(), questions(s))).collect(),
        image_owner,
        marks: plan.marks,
        clipped: vec![(PipelineVariant::Baseline, "div2-10"), (PipelineVariant::HintFirst, "frac-3-2-of-4")],
        specs,
    });

    let cache_dir = root.join("fixtures/cache");
    if cache_dir.exists() {
        std::fs::remove_dir_all(&cache_dir).unwrap();
    }
    let runs = tempfile::tempdir().unwrap();
    let images: Arc<dyn ImageTransport> = Arc::new(DescriptionImages(t2i_pngs));
    let calls = Arc::new(Mutex::new(0usize));
    for variant in PipelineVariant::ALL {
        let o = oracle.clone();
        let n = calls.clone();
        let transport = FnTransport::new(move |req| {
            *n.lock().unwrap() += 1;
            Ok(ChatResponse::stop(o.answer(variant, req)))
        });
        let cfg = config(&root, runs.path(), variant, Mode::Record);
        let gateway = Gateway::new(Mode::Record, Some(cache_dir.clone()), Arc::new(transport)).with_clock(|| RECORDED_AT.into());
        let image_backend =
            CachedImageBackend::new(Mode::Record, Cache::new(&cache_dir), images.clone()).with_clock(|| RECORDED_AT.into());
        let out = run_pipeline(
            &cfg,
            &Backends {
                gateway: &gateway,
                images: &image_backend,
            },
        )
        .unwrap();
        assert!(out.manifest.items.iter().all(|i| i.error_code.is_none()), "{variant}: failed items");
    }
    eprintln!("recorded {} chat calls", calls.lock().unwrap());

    // replay check
    let replay_runs = tempfile::tempdir().unwrap();
    for (variant, want) in [
        (PipelineVariant::Baseline, [Some(0.85), Some(0.79), Some(0.80), Some(0.76), Some(0.94), Some(0.96)]),
        (PipelineVariant::T2i, [None, None, Some(0.12), Some(0.10), Some(0.14), Some(0.13)]),
        (PipelineVariant::HintFirst, [None, None, Some(0.74), Some(0.68), Some(0.87), Some(0.86)]),
        (PipelineVariant::OnTask, [None; 6]),
    ] {
        let cfg = config(&root, replay_runs.path(), variant, Mode::Replay);
        let backends = OwnedBackends::from_config(&cfg).unwrap();
        let out = run_pipeline(&cfg, &backends.borrow()).unwrap();
        let report = out.report.unwrap();
        print!("{}", hintgraph::vqa::emit_report(&report, hintgraph::vqa::ReportFormat::Markdown));
        close(&report, want);
    }
}
