int cycle_ping_a(int n);

static __attribute__((noinline)) int bounce(void)
{
    return cycle_ping_a(3);
}

int main(void)
{
    return bounce();
}
