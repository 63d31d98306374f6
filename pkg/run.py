from app import cli

if __name__ == '__main__':
    # python run.py run scenarios/estimate.toml --threads 4
    cli()
