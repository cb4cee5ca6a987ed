#![no_main]
use carleman_lab::grid::read_field_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = read_field_csv(text) {
            assert_eq!(table.values.len(), table.times.len() * table.nodes);
        }
    }
});
