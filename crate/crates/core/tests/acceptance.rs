//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use puppet_core::corpus::{generate_apps, generate_hash_families, random_hierarchy, CorpusSpec, HashFamilySpec, RandomTreeParams};
use puppet_core::replay::WarningKind;
use puppet_core::similarity::{cluster_homogeneity, MvpTree, SimilarityIndex};
use puppet_core::view::{PathSegment, Screen};
use puppet_core::{
    dbscan, decode_rfb, dispatch_touch, encode_rfb, hamming, parse_trace, phash, record_trace, replay_raw,
    replay_trace, serialize_trace, sweep, ConsumedVia, ConsumptionResult, EventAction, InputEvent, PerceptualHash,
    Policy, Rect, ReplayOptions, RfbMessage, ViewHierarchy, ViewNode, ViewPath,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn hierarchy(root: ViewNode, w: u32, h: u32) -> ViewHierarchy {
    ViewHierarchy {
        activity_name: "com.example.Main".into(),
        activity_hash: 0x1a2b,
        screen: Screen { width: w, height: h },
        root,
    }
}

fn two_buttons(second: Option<Rect>) -> ViewHierarchy {
    let mut children = vec![ViewNode::new("Button", 101, Rect::new(40, 100, 160, 160), Policy::ConsumeByListener)];
    if let Some(b) = second {
        children.push(ViewNode::new("ImageButton", 102, b, Policy::ConsumeByListener));
    }
    hierarchy(
        ViewNode::new("FrameLayout", 100, Rect::new(0, 0, 320, 480), Policy::Pass).with_children(children),
        320,
        480,
    )
}

fn taps(points: &[(u32, u32)]) -> Vec<InputEvent> {
    let mut t = 0;
    let mut out = Vec::new();
    for &(x, y) in points {
        out.push(InputEvent::touch(t, EventAction::Down, x, y));
        out.push(InputEvent::touch(t + 40, EventAction::Up, x, y));
        t += 100;
    }
    out
}

fn score_semantics() -> Outcome {
    let start = Instant::now();
    let base = two_buttons(Some(Rect::new(40, 300, 160, 360)));
    let mut points = vec![(100, 130); 5];
    points.extend([(60, 320); 5]);
    let trace = record_trace(&taps(&points), &base, "com.example").expect("recordable");
    let target = two_buttons(None);
    let report = replay_trace(&trace, &target, &ReplayOptions::default());
    let elapsed = start.elapsed();
    let failed_at = report.failure.as_ref().map(|f| f.step + 1);
    check(
        trace.steps.len() == 20
            && report.score == 0.5
            && report.executed_steps == 10
            && failed_at == Some(11)
            && elapsed < Duration::from_secs(1),
        format!(
            "20-step trace, path resolution fails at step {}: score {:.2} ({}/{}) in {:?}",
            failed_at.map_or("none".to_string(), |s| s.to_string()), report.score, report.executed_steps, report.total_steps, elapsed
        ),
    )
}

fn shifted_layout() -> Outcome {
    let start = Instant::now();
    let original = Rect::new(40, 300, 160, 360);
    let base = two_buttons(Some(original));
    let pts = [(41, 301), (100, 330), (159, 359), (60, 320), (140, 345)];
    let trace = record_trace(&taps(&pts), &base, "com.example").expect("recordable");
    let mut worst_inside = usize::MAX;
    let mut fewest_outside = usize::MAX;
    let mut deterministic = true;
    let mut all_scored = true;
    for (dx, dy) in [(20, 0), (0, 20), (-25, 40), (130, 0), (60, -90)] {
        let moved = Rect::new(original.left + dx, original.top + dy, original.right + dx, original.bottom + dy);
        let target = two_buttons(Some(moved));
        let views = replay_trace(&trace, &target, &ReplayOptions::default());
        let raw = replay_raw(&trace, &target, &ReplayOptions::default());
        deterministic &= views == replay_trace(&trace, &target, &ReplayOptions::default())
            && raw == replay_raw(&trace, &target, &ReplayOptions::default());
        all_scored &= views.score == 1.0;
        let in_button = |e: &InputEvent| moved.contains(e.x as i64, e.y as i64);
        let inside = views.emitted.touch.iter().filter(|e| in_button(e)).count();
        worst_inside = worst_inside.min(if inside == views.emitted.touch.len() { inside } else { 0 });
        let outside = raw.emitted.touch.iter().filter(|e| !in_button(e)).count();
        let flagged = raw.warnings_of(WarningKind::OffTarget).len();
        fewest_outside = fewest_outside.min(if flagged == outside { outside } else { 0 });
    }
    let elapsed = start.elapsed();
    check(
        all_scored && worst_inside > 0 && fewest_outside >= 1 && deterministic && elapsed < Duration::from_secs(1),
        format!(
            "5 shifts of 20-130 px: ratio replay score 1.0 with all touches inside = {}, raw replay outside (flagged) >= {} per shift, deterministic = {deterministic}, {elapsed:?}",
            all_scored && worst_inside > 0,
            fewest_outside
        ),
    )
}

/// Recursive dispatcher written from the Android contract: a view group
/// offers the event to children in reverse order, then handles it itself.
fn reference_dispatch(h: &ViewHierarchy, x: i64, y: i64) -> ConsumptionResult {
    fn segment(parent: Option<&ViewNode>, node: &ViewNode, index: usize) -> PathSegment {
        let ordinal = parent.map_or(0, |p| p.children[..index].iter().filter(|c| c.class_name == node.class_name).count());
        PathSegment { class_name: node.class_name.clone(), ordinal }
    }
    fn visit(node: &ViewNode, x: i64, y: i64, path: &mut Vec<PathSegment>) -> Option<(Vec<PathSegment>, ConsumedVia)> {
        for i in (0..node.children.len()).rev() {
            let child = &node.children[i];
            let inside = x >= child.bounds.left as i64
                && x <= child.bounds.right as i64
                && y >= child.bounds.top as i64
                && y <= child.bounds.bottom as i64;
            if !inside {
                continue;
            }
            path.push(segment(Some(node), child, i));
            if let Some(found) = visit(child, x, y, path) {
                return Some(found);
            }
            path.pop();
        }
        let via = match node.policy {
            Policy::ConsumeByListener => ConsumedVia::Listener,
            Policy::ConsumeBySelf => ConsumedVia::SelfHandler,
            Policy::Pass => return None,
        };
        Some((path.clone(), via))
    }
    let r = &h.root.bounds;
    if !(x >= r.left as i64 && x <= r.right as i64 && y >= r.top as i64 && y <= r.bottom as i64) {
        return ConsumptionResult::Activity;
    }
    let mut path = vec![segment(None, &h.root, 0)];
    match visit(&h.root, x, y, &mut path) {
        None => ConsumptionResult::Activity,
        Some((segments, via)) => ConsumptionResult::View { path: ViewPath(segments), via },
    }
}

fn dispatch_conformance() -> Outcome {
    let group = |children: Vec<ViewNode>| {
        hierarchy(
            ViewNode::new("ViewGroup", 1, Rect::new(0, 0, 200, 200), Policy::Pass).with_children(children),
            200,
            200,
        )
    };
    let left = group(vec![
        ViewNode::new("View", 2, Rect::new(0, 0, 200, 200), Policy::Pass),
        ViewNode::new("View", 3, Rect::new(0, 0, 200, 200), Policy::Pass),
    ]);
    let right = group(vec![
        ViewNode::new("View", 2, Rect::new(0, 0, 200, 200), Policy::Pass),
        ViewNode::new("View", 3, Rect::new(0, 0, 200, 200), Policy::ConsumeBySelf),
    ]);
    let fig_left = dispatch_touch(&left, 100, 100) == ConsumptionResult::Activity;
    let fig_right = match dispatch_touch(&right, 100, 100) {
        ConsumptionResult::View { path, via } => path.to_string() == "ViewGroup:0/View:1" && via == ConsumedVia::SelfHandler,
        ConsumptionResult::Activity => false,
    };

    let params = RandomTreeParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut points, mut mismatches) = (0usize, 0usize);
    for seed in 0..1000 {
        let h = random_hierarchy(seed, &params);
        let mut probe = Vec::new();
        h.root.walk(&mut |n, _| {
            let b = n.bounds;
            for (x, y) in [(b.left, b.top), (b.right, b.bottom), (b.left - 1, b.top), (b.right + 1, b.bottom)] {
                probe.push((x as i64, y as i64));
            }
        });
        for _ in 0..20 {
            let x = (rng.next_u64() % (params.screen.width as u64 + 20)) as i64 - 10;
            let y = (rng.next_u64() % (params.screen.height as u64 + 20)) as i64 - 10;
            probe.push((x, y));
        }
        for (x, y) in probe {
            points += 1;
            let got = serde_json::to_string(&dispatch_touch(&h, x, y)).expect("json");
            let want = serde_json::to_string(&reference_dispatch(&h, x, y)).expect("json");
            mismatches += (got != want) as usize;
        }
    }
    check(
        fig_left && fig_right && mismatches == 0,
        format!(
            "all-pass -> Activity: {fig_left}; second child consumes: {fig_right}; 1000 random hierarchies, {points} points, {mismatches} mismatches"
        ),
    )
}

fn metric_and_index() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for i in 0..100_000 {
        let a = PerceptualHash(rng.next_u64());
        // half of the triples are near each other so the bound is tight
        let (b, c) = if i % 2 == 0 {
            (PerceptualHash(rng.next_u64()), PerceptualHash(rng.next_u64()))
        } else {
            (
                PerceptualHash(a.0 ^ (rng.next_u64() & rng.next_u64() & rng.next_u64())),
                PerceptualHash(a.0 ^ (rng.next_u64() & rng.next_u64() & rng.next_u64())),
            )
        };
        if hamming(a, c) > hamming(a, b) + hamming(b, c) || hamming(a, b) != hamming(b, a) || hamming(a, a) != 0 {
            violations += 1;
        }
    }
    let centres: Vec<u64> = (0..20).map(|_| rng.next_u64()).collect();
    let near = |rng: &mut ChaCha8Rng| centres[(rng.next_u64() % 20) as usize] ^ (rng.next_u64() & rng.next_u64() & rng.next_u64());
    let points: Vec<PerceptualHash> = (0..1000).map(|_| PerceptualHash(near(&mut rng))).collect();
    let tree = MvpTree::new(points.clone());
    let mut mismatches = 0;
    for q in 0..100 {
        let query = PerceptualHash(if q % 4 == 0 { rng.next_u64() } else { near(&mut rng) });
        let mut scan: Vec<(u32, usize)> = points.iter().enumerate().map(|(i, &p)| (hamming(query, p), i)).collect();
        scan.sort_unstable();
        for k in [1, 5] {
            mismatches += (tree.knn(query, k) != scan[..k]) as usize;
        }
    }
    let elapsed = start.elapsed();
    check(
        violations == 0 && mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("1e5 triples: {violations} metric violations; kNN vs scan on 1000 x 100, k in {{1,5}}: {mismatches} mismatches; {elapsed:?}"),
    )
}

fn union_find_components(points: &[PerceptualHash], eps: u32) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if hamming(points[i], points[j]) <= eps {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    comps.sort();
    comps
}

fn dbscan_characterization() -> Outcome {
    let mut mismatches = 0;
    let mut sizes = Vec::new();
    for (set, seed) in [11u64, 12, 13].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<u64> = (0..40).map(|_| rng.next_u64()).collect();
        let points: Vec<PerceptualHash> = (0..500)
            .map(|i| {
                let noise = (0..3 + set).fold(!0u64, |m, _| m & rng.next_u64());
                PerceptualHash(if i % 10 == 0 { rng.next_u64() } else { centres[(rng.next_u64() % 40) as usize] ^ noise })
            })
            .collect();
        for eps in [4, 10, 16] {
            let mut got = dbscan(&points, eps, 2).clusters;
            got.iter_mut().for_each(|c| c.sort_unstable());
            got.sort();
            let want = union_find_components(&points, eps);
            sizes.push(want.len());
            mismatches += (got != want) as usize;
        }
    }
    check(
        mismatches == 0,
        format!("3 sets x eps {{4,10,16}} (component counts {sizes:?}): {mismatches} mismatches against union-find"),
    )
}

fn knee() -> Outcome {
    let spec = HashFamilySpec::default();
    let (hashes, _) = generate_hash_families(&spec).expect("families place");
    let n = hashes.len();
    let eps: Vec<u32> = (0..=32).collect();
    let rows = sweep(&hashes, &eps, 2);
    let mut ok = true;
    let mut table = Vec::new();
    for r in &rows {
        let size = r.avg_cluster_size.unwrap_or(0.0);
        if (8..=23).contains(&r.eps) {
            ok &= r.num_clusters == spec.n_families && size == spec.members_per_family as f64;
        }
        if r.eps >= 24 {
            ok &= r.num_clusters <= (spec.n_families / 4).max(1) && size >= n as f64 / 2.0;
        }
        if [0, 4, 8, 16, 23, 24, 32].contains(&r.eps) {
            table.push(format!("eps {}: {} x {:.1}", r.eps, r.num_clusters, size));
        }
    }
    check(
        ok,
        format!("{} families x {} members; {}", spec.n_families, spec.members_per_family, table.join(", ")),
    )
}

fn homogeneity_analog() -> Outcome {
    let spec = CorpusSpec { seed: 5, n_families: 30, variants_per_family: 3, ..CorpusSpec::default() };
    let apps = generate_apps(&spec).expect("valid spec");
    let labels: Vec<usize> = apps.iter().map(|(r, _, _)| r.family).collect();
    let index = SimilarityIndex::build(
        apps.iter()
            .map(|(r, _, _)| puppet_core::similarity::IndexEntry {
                app_id: r.app_id.clone(),
                screenshot_id: "main".into(),
                hash: r.hash,
            })
            .collect(),
    );
    let set = dbscan(index.hashes(), 10, 2);
    let report = cluster_homogeneity(&set, &labels).expect("clusters are non-empty");
    let pure = report.pure_fraction.unwrap_or(0.0);
    check(
        pure >= 0.85,
        format!(
            "{} screenshots, eps 10, min 2: {} clusters, {} noise, pure fraction {:.4}",
            apps.len(),
            set.clusters.len(),
            set.noise.len(),
            pure
        ),
    )
}

fn hash_throughput() -> Outcome {
    let spec = CorpusSpec { n_families: 1, variants_per_family: 1, ..CorpusSpec::default() };
    let (_, img, _) = generate_apps(&spec).expect("valid spec").remove(1);
    let mut times: Vec<Duration> = (0..31)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(phash(std::hint::black_box(&img)).expect("large enough"));
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    check(
        median <= Duration::from_millis(50),
        format!("{}x{} median over 31 runs: {median:?}", img.width(), img.height()),
    )
}

fn format_stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rfb_bad = 0;
    for _ in 0..10_000 {
        let v = rng.next_u64();
        let msg = if v & 1 == 0 {
            RfbMessage::PointerEvent { button_mask: (v >> 8) as u8, x: (v >> 16) as u16, y: (v >> 32) as u16 }
        } else {
            RfbMessage::KeyEvent { down: v & 2 != 0, key: (v >> 32) as u32 }
        };
        let bytes = encode_rfb(&msg);
        rfb_bad += (decode_rfb(&bytes).ok() != Some((msg, bytes.len()))) as usize;
    }

    let focus: Vec<ViewHierarchy> = (0..4).map(|s| random_hierarchy(s, &RandomTreeParams::default())).collect();
    let mut events = Vec::new();
    for (i, _) in focus.iter().enumerate() {
        let t = i as u64 * 1000;
        events.push(InputEvent::touch(t, EventAction::Down, 13 + 7 * i as u32, 101));
        events.push(InputEvent::touch(t + 30, EventAction::Move, 99, 187));
        events.push(InputEvent::touch(t + 60, EventAction::Up, 239, 319));
        events.push(InputEvent::key(t + 90, true, 0xff0d));
    }
    let timeline: puppet_core::DumpTimeline = {
        let mut tl = puppet_core::DumpTimeline::new();
        for (i, h) in focus.iter().enumerate() {
            tl.insert(i as u64 * 1000, h.clone());
        }
        tl
    };
    let trace = record_trace(&events, &timeline, "fmt").expect("recordable");
    let text = serialize_trace(&trace);
    let reparsed = parse_trace(&text).expect("parses");
    let trace_ok = reparsed == trace && serialize_trace(&reparsed) == text;

    let entries = (0..200)
        .map(|i| puppet_core::similarity::IndexEntry {
            app_id: format!("app{:03}", i / 3),
            screenshot_id: format!("s{}", i % 3),
            hash: PerceptualHash(rng.next_u64()),
        })
        .collect();
    let index = SimilarityIndex::build(entries);
    let dir = std::env::temp_dir().join(format!("puppet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("index.txt");
    index.save(&path).expect("save");
    let loaded = SimilarityIndex::load(&path).expect("load");
    let index_ok = loaded.to_text() == index.to_text()
        && std::fs::read_to_string(&path).expect("read") == index.to_text()
        && loaded.entries() == index.entries();
    let _ = std::fs::remove_dir_all(&dir);

    check(
        rfb_bad == 0 && trace_ok && index_ok,
        format!("RFB 1e4 messages: {rfb_bad} mismatches; trace round-trip identical: {trace_ok}; index round-trip identical: {index_ok}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("re-execution score semantics", score_semantics),
        ("shifted-layout robustness", shifted_layout),
        ("dispatch conformance", dispatch_conformance),
        ("hamming metric and index exactness", metric_and_index),
        ("DBSCAN characterization", dbscan_characterization),
        ("knee reproduction", knee),
        ("cluster homogeneity", homogeneity_analog),
        ("hash throughput", hash_throughput),
        ("codec and format stability", format_stability),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2}. {name}: {}", i + 1, outcome.detail);
        if !outcome.pass {
            failed.push(i + 1);
        }
    }
    println!(
        "[N/A ] 10. field behaviour counts: not reproducible here; they need real malware samples, an instrumented \
         sandbox and human testers. Criteria 1-3 cover the replay mechanism those counts depend on."
    );
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
