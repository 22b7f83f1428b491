use soac_cli::format::{format_rational, parse_layout, parse_rational, serialize_layout};
use soac_cli::{parse_document, parse_instance, serialize_document, serialize_instance, LayoutSpec};
use soac_core::decomposition::find_layout;
use soac_core::generators::{gen_random, LatencyRange};

#[test]
fn minimal_file_is_an_empty_instance() {
    let inst = parse_instance("soac 1\nvertices 1\n").unwrap();
    assert_eq!(inst.vertex_count(), 1);
    assert_eq!(inst.graph.arc_count(), 0);
    assert_eq!(inst.agent_count(), 0);
    assert_eq!(serialize_instance(&inst), "soac 1\nvertices 1\nagents 0\n");
}

#[test]
fn messy_input_canonicalises() {
    let messy = "# demo\n  soac   1\nvertices 3 # three\n\narc 0 1 lat 2/4   3/1 0\narc 1 2 lat\nagent 0 2\nagent 0 2\nalpha 1\nlambda 6/4\n";
    let canonical =
        "soac 1\nvertices 3\narc 0 1 lat 1/2 3 0\narc 1 2 lat\nagents 2\nagent 0 2\nagent 0 2\nlambda 3/2\nalpha 1\n";
    let inst = parse_instance(messy).unwrap();
    assert_eq!(serialize_instance(&inst), canonical);
    assert_eq!(serialize_instance(&parse_instance(canonical).unwrap()), canonical);
}

#[test]
fn rationals_render_canonically() {
    assert_eq!(format_rational(&parse_rational("1/3").unwrap()), "1/3");
    assert_eq!(format_rational(&parse_rational("2").unwrap()), "2");
    assert_eq!(format_rational(&parse_rational("10/5").unwrap()), "2");
    assert_eq!(format_rational(&parse_rational("0/7").unwrap()), "0");
    for bad in ["-1", "1/0", "1.5", "", "/2", "a"] {
        assert!(parse_rational(bad).is_none(), "{bad}");
    }
}

#[test]
fn random_instances_round_trip_with_layouts() {
    for seed in 0..50 {
        let inst = gen_random(
            2 + seed as usize % 7,
            4 + seed as usize % 8,
            seed as usize % 5,
            3,
            LatencyRange::default(),
            seed,
        )
        .unwrap();
        let layout = find_layout(&inst, 4).unwrap().into_layout();
        let doc = soac_cli::Document {
            instance: inst.clone(),
            layout: Some(LayoutSpec::from_layout(&layout)),
        };
        let text = serialize_document(&doc);
        let parsed = parse_document(&text).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(serialize_document(&parsed), text);
        let rebuilt = parsed.layout.unwrap().build(&inst.graph).unwrap();
        assert_eq!(rebuilt, layout);
        let block = serialize_layout(&LayoutSpec::from_layout(&layout));
        assert_eq!(
            parse_layout(&block, inst.vertex_count()).unwrap(),
            LayoutSpec::from_layout(&layout)
        );
    }
}

fn error_line(text: &str) -> usize {
    parse_instance(text).unwrap_err().line
}

#[test]
fn malformed_files_are_rejected_with_line_numbers() {
    assert_eq!(error_line("soac 1\nvertices 2\narc 0 0 lat 1\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\nvertices 3\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\narc 0 5 lat 1\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\nagent 0 1\nagents 2\n"), 4);
    assert_eq!(error_line("soac 1\nvertices 2\narc 0 1 lat 1/0\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\narc 0 1 1\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\nlambda 1\nlambda 2\n"), 4);
    assert_eq!(error_line("soac 1\nvertices 2\nagent 0 1\nalpha 2\n"), 4);
    assert_eq!(error_line("soac 1\nvertices 2\ntree - 0\n"), 3);
    assert_eq!(error_line("soac 1\nvertices 2\nbogus\n"), 3);
    assert_eq!(error_line("vertices 2\n"), 1);
    assert_eq!(error_line("soac 1\nsoac 1\n"), 2);
    assert_eq!(error_line("soac 1\narc 0 1 lat\n"), 0);
    assert_eq!(error_line("soac 1\nvertices 2\nlayout\ntree - 0\n"), 3);
}
