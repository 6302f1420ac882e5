use rwt_core::grid::{infer_extent, load_csv, PipeGeometry, PipeGrid};

#[test]
fn csv_round_trip_preserves_cells_and_blanks() {
    let g = PipeGeometry::tiled(5, 7, 50.0).unwrap();
    let cells = (0..5)
        .flat_map(|r| (0..7).map(move |c| (r, c)))
        .filter(|(r, c)| (r + c) % 3 != 0);
    let grid = PipeGrid::from_cells(
        g,
        30.0,
        cells.map(|(r, c)| (r, c, 1.0 + r as f64 * 0.37 + c as f64 / 3.0)),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    grid.save_csv(&path).unwrap();
    assert_eq!(load_csv(&path, g).unwrap(), grid);
    assert_eq!(infer_extent(&path).unwrap(), (5, 7));
}
