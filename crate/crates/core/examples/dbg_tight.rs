use constellation::constructions::*;
fn main() {
    for eps in [1e-2, 1e-3, 1e-4] {
        match tightness_config_with_offset(5, 10, eps, 0.02, 3) {
            Ok(_) => println!("ok {eps}"),
            Err(e) => println!("{eps} {e}"),
        }
    }
}
