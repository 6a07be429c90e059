macro_rules! example {
    ($module:ident, $file:literal) => {
        #[path = $file]
        mod $module;

        #[test]
        fn $module() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(towers, "../examples/towers.rs");
example!(norms, "../examples/norms.rs");
example!(tukey, "../examples/tukey.rs");
example!(fusion, "../examples/fusion.rs");
example!(early_reading, "../examples/early_reading.rs");
example!(localisation, "../examples/localisation.rs");
example!(products, "../examples/products.rs");
example!(suitable_family, "../examples/suitable_family.rs");
