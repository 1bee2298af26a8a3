use laser_core::advisor::split;
use laser_core::cost::{eG, eg};
use laser_core::{entries_per_block, ColumnSet, Engine, LayoutConfig, Schema};

use crate::util::{inline_options, params, Outcome};

fn set(cols: &[u16]) -> ColumnSet {
    cols.iter().copied().collect()
}

fn check(failures: &mut Vec<String>, what: &str, ok: bool) {
    if !ok {
        failures.push(what.to_string());
    }
}

/// Updates columns B and C of key 100, then merges with the full row.
fn partial_merge(layout: LayoutConfig) -> Result<Vec<u32>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let schema = Schema::new(4, 4).unwrap();
    let p = params(&schema, 2, 2, 4, 2, 1);
    let opts = inline_options(schema, p, layout, 4096);
    let engine = Engine::open(dir.path(), opts).map_err(|e| e.to_string())?;
    let (a, b, c, d, b2, c2) = (1, 2, 3, 4, 20, 30);
    let run = || -> laser_core::Result<Vec<u32>> {
        engine.insert(100, &[a, b, c, d])?;
        engine.flush()?;
        engine.update(100, &[(2, b2), (3, c2)])?;
        engine.flush()?;
        engine.compact_until_stable()?;
        let v = engine.version();
        let stored: Vec<(usize, u64)> = (1..=v.depth())
            .map(|l| (l, v.runs_at(l).iter().map(|r| r.entries()).sum::<u64>()))
            .filter(|&(_, n)| n > 0)
            .collect();
        let collapsed = v.level0().is_empty()
            && stored.len() == 1
            && stored[0].1 == engine.layout().groups_at(stored[0].0) as u64;
        if !collapsed {
            return Err(laser_core::Error::InvalidArgument(format!(
                "versions not merged: {stored:?}"
            )));
        }
        let row = engine.get(100, ColumnSet::full(4))?.unwrap_or_default();
        Ok(row.values)
    };
    run().map_err(|e| e.to_string())
}

pub fn worked_examples() -> Outcome {
    let mut failures = Vec::new();

    let r = ColumnSet::full(4);
    let atoms = split(r, [set(&[2, 3, 4]), set(&[1, 2]), r]);
    check(
        &mut failures,
        "split",
        atoms == vec![set(&[1]), set(&[2]), set(&[3, 4])],
    );

    let groups = [set(&[1, 2]), set(&[3, 4])];
    check(
        &mut failures,
        "E^g for {A,C}",
        eg(&groups, set(&[1, 3])) == 2,
    );
    check(
        &mut failures,
        "E^g for {A,B}",
        eg(&groups, set(&[1, 2])) == 1,
    );
    check(
        &mut failures,
        "E^G for {A,C}",
        eG(&groups, set(&[1, 3])) == 6,
    );
    check(
        &mut failures,
        "E^G for {A,B}",
        eG(&groups, set(&[1, 2])) == 3,
    );

    let schema = Schema::new(4, 4).unwrap();
    let p = params(&schema, 2, 2, 6, 4, 4);
    let b = p.block_entries;
    let per_block = |g: &[u16]| entries_per_block(&schema, &p, set(g)).unwrap();
    check(
        &mut failures,
        "B(1+c)/2",
        per_block(&[3]) == b * 5 / 2 && per_block(&[3]) == 15,
    );
    check(
        &mut failures,
        "5B/3",
        per_block(&[1, 2]) == b * 5 / 3 && per_block(&[1, 2]) == 10,
    );
    check(
        &mut failures,
        "2 B_<C> / 3",
        per_block(&[1, 2]) == 2 * per_block(&[3]) / 3,
    );
    check(&mut failures, "row B", per_block(&[1, 2, 3, 4]) == b);

    let layouts = [
        LayoutConfig::row(&schema, 2),
        LayoutConfig::new(vec![
            vec![r],
            vec![set(&[1, 2]), set(&[3, 4])],
            vec![set(&[1, 2]), set(&[3]), set(&[4])],
        ]),
        LayoutConfig::uniform(&schema, 2, 1),
    ];
    for layout in layouts {
        let name = layout.to_string().replace('\n', "; ");
        match partial_merge(layout) {
            Ok(v) if v == [1, 20, 30, 4] => {}
            Ok(v) => failures.push(format!("merge under {name} gave {v:?}")),
            Err(e) => failures.push(format!("merge under {name}: {e}")),
        }
    }

    if failures.is_empty() {
        Outcome::new(
            true,
            "split, E^g/E^G, entries per block and the partial-row merge (100: a,b',c',d) match",
        )
    } else {
        Outcome::fail(format!("mismatches: {}", failures.join(", ")))
    }
}
