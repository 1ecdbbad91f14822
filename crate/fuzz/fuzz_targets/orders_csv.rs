#![no_main]

use eldt_core::datagen::{read_orders, write_orders};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(orders) = read_orders(data) {
        let mut buf = Vec::new();
        write_orders(&mut buf, &orders).expect("writes to memory");
        assert_eq!(read_orders(buf.as_slice()).expect("written orders parse"), orders);
    }
});
